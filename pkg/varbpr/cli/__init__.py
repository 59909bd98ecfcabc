"""VarBPR - configuration driven experiment runner and command-line verbs"""

# Heading of the unit's keys in the configuration listing of varbpr --help
category = "Experiment"
# Configuration variables owned by this unit
controls = [
    {
        "type": "line_edit",
        "var": "seed",
        "section": "model",
        "label": "Seed",
        "tooltip": "Master seed, every random stream of a run is spawned from it"
    }, {
        "type": "line_edit",
        "var": "output_directory",
        "section": "output",
        "label": "Output directory",
        "tooltip": "Directory receiving the result tables and reports"
    }, {
        "type": "checkbox",
        "var": "verbose",
        "section": "output",
        "label": "Verbose mode",
        "tooltip": "Print progress messages and an epoch progress bar"
    }
]
