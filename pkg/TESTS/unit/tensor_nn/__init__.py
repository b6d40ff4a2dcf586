# tensor_nn module tests
