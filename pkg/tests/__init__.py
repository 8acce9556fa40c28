# Test package for qpreduce
