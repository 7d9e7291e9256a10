// training.cc placeholder
