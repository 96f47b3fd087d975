"""Benchmark harness: corpus generation, pipeline runs, reporting, judging."""
