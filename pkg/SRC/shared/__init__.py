# Shared utilities and exceptions
