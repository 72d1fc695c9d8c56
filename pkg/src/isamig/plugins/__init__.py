"""Reference external peers for the NDJSON protocol."""
