# Numerical kernel: su(2) algebra, periodic grid, connections
