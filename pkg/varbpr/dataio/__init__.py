"""VarBPR - loads a rating log, splits it, injects noise and builds item signals"""

# Heading of the unit's keys in the configuration listing of varbpr --help
category = "Dataset"
# Configuration variables owned by this unit
controls = [
    {
        "type": "filepool",
        "var": "dataset_path",
        "section": "dataset",
        "label": "Dataset file",
        "tooltip": "Interaction file, e.g. ml-100k/u.data"
    }, {
        "type": "combobox",
        "var": "dataset_format",
        "section": "dataset",
        "label": "File format",
        "options": ["ml100k_tab", "ml1m_doublecolon", "generic_implicit_csv"],
        "tooltip": "Tab separated (ML-100K), '::' separated (ML-1M) or csv with header user,item[,rating][,timestamp]"
    }, {
        "type": "combobox",
        "var": "split",
        "section": "dataset",
        "label": "Split protocol",
        "options": ["clean_test", "implicit_80_20"],
        "tooltip": "clean_test needs ratings: half of each user's items rated 4 or higher are held out"
    }, {
        "type": "line_edit",
        "var": "test_fraction",
        "section": "dataset",
        "label": "Test fraction",
        "tooltip": "Share of interactions held out by the implicit split"
    }, {
        "type": "line_edit",
        "var": "noise_rate",
        "section": "noise",
        "label": "Noise rate",
        "tooltip": "False positives added to the training set, as a share of its size"
    }
]
