import json

import numpy as np


def convert_value(value):
    if isinstance(value, np.ndarray):
        return [convert_value(v) for v in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, tuple):
        return [convert_value(v) for v in value]
    if isinstance(value, dict):
        return {k: convert_value(v) for k, v in value.items()}
    if isinstance(value, list):
        return [convert_value(v) for v in value]
    return value


class Serializer:
    def __init__(self, serialization_fields, related_serializers=None):
        self.serialization_fields = serialization_fields
        self.related_serializers = related_serializers or {}

    def serialize(self, instance):
        serialized_data = {}
        for key, attr_name in self.serialization_fields.items():
            if key in self.related_serializers:
                related_data = getattr(instance, attr_name)
                if isinstance(related_data, dict):
                    serialized_data[key] = {
                        name: self.related_serializers[key].serialize(sub_instance) for name, sub_instance in related_data.items()
                    }
                elif isinstance(related_data, list):
                    serialized_data[key] = [
                        self.related_serializers[key].serialize(sub_instance) for sub_instance in related_data
                    ]
                else:
                    serialized_data[key] = self.related_serializers[key].serialize(related_data)
            else:
                attr = getattr(instance, attr_name, None)
                if callable(attr):
                    attr = attr()
                serialized_data[key] = convert_value(attr)
        return serialized_data

    def to_json(self, instance) -> str:
        # Sorted keys and a trailing newline keep reports byte-identical across runs
        return json.dumps(self.serialize(instance), indent=2, sort_keys=True) + "\n"
