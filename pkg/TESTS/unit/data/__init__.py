# data module tests
