# Two-phase training and evaluation module
