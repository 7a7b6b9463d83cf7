# CLI Package - kdexp command line
