import json
import logging
import math

from dataclasses_json import DataClassJsonMixin

json_logger = logging.getLogger('json')


def _finite(value):
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {key: _finite(item) for key, item in value.items()}
    if isinstance(value, list):
        return [_finite(item) for item in value]
    return value


class LoggingMixin(DataClassJsonMixin):
    def log(self, level: int) -> None:
        # infinite distances are legal values; JSON has no literal for them
        json_logger.log(
            level=level,
            msg=json.dumps(_finite(self.to_dict())),
            extra={'event_type': self.__class__.__name__},
        )
