# Integration tests
