"""Average-cost MDP solver and certificate verifier."""
