# Feature Engineering Module
