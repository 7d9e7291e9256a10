// synthgen.cc placeholder
