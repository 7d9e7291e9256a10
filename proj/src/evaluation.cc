// evaluation.cc placeholder
