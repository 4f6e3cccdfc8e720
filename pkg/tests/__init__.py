# Tests package for the private read/write simulator
