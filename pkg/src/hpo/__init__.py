# Hyper-parameter Optimization Module
