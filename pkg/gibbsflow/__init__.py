name = "gibbsflow"
