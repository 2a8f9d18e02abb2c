import json

import numpy as np


class SortedNumpyEncoder(json.JSONEncoder):
    """ Dump sets as sorted lists and numpy scalars/arrays as plain numbers/lists """

    def default(self, obj):
        if isinstance(obj, set):
            return list(sorted(obj))
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.bool_):
            return bool(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        return json.JSONEncoder.default(self, obj)
