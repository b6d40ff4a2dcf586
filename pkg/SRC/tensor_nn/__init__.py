# Numerical core: layers, losses and optimizer
