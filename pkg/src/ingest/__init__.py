# Data Ingestion Module
