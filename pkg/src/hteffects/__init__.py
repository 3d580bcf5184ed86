"""Treatment effect estimation toolkit."""
