# Stages of an experiment run, in the order the runner prepares them. Each
# stage declares the configuration variables it owns in its `controls`.
packages = ['dataio', 'learning', 'evaluation']

__version__ = '1.0.0'
