import pytest

from mhealth.gateway.outbox import LinkDown
from mhealth.vitals import VitalsSample


class RecordingUplink:
    """Acknowledges everything while ``up``; can fail after N acks."""

    def __init__(self, fail_after=None):
        self.up = True
        self.received = []
        self.fail_after = fail_after

    def available(self):
        return self.up

    def send(self, entry):
        if not self.up or (self.fail_after is not None and len(self.received) >= self.fail_after):
            raise LinkDown("test outage")
        self.received.append(entry)


@pytest.fixture
def uplink():
    return RecordingUplink()


def make_sample(t=0, spo2=97.0, hr=72.0, temp=36.8, act=0.2):
    return VitalsSample(t, spo2, hr, temp, act)
