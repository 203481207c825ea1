"""Graph-structured visual imitation from a single demonstration."""
