# Data ingestion and synthetic dataset module
