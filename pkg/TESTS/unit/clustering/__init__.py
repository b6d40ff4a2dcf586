# clustering module tests
