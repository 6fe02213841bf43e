"""
One module per named experiment. Each exposes a pydantic parameter model
(unknown keys rejected) and `run(params, seed) -> ExperimentResult`.
"""
