# Quantum metamaterial lattice simulator
