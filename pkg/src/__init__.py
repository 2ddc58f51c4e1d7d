# Yang-Mills slice-flow lab
