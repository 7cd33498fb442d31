# Test package for mfhpon
