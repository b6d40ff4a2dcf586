# ynet module tests
