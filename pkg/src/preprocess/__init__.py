# Pre-processing Module
