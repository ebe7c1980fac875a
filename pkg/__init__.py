# This file makes the root directory a Python package
