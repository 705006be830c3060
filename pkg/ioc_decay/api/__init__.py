"""HTTP service over the attribute store."""
