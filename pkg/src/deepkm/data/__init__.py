"""Dataset ingestion (IDX / synthetic) and model file formats."""
