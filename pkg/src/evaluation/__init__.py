# Evaluation Module
