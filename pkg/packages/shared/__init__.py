# Shared Package - Common utilities and components