# Multi-tier Hybrid Intrusion Detection
