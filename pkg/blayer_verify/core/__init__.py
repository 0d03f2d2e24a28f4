"""core — The numerical modules: model, audit, profile, Evans, symbol, resolvent, decay."""
