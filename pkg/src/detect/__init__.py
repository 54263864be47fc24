# Hybrid Detection Module
