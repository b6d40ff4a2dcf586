# training module tests
