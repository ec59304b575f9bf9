//! Home of the `acceptance` test target, which trains and evaluates on MNIST.
