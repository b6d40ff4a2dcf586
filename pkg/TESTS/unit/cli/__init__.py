# cli module tests
