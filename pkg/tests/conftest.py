import numpy as np

from switchdet.switchboard import ActionInterval


def random_clean_instances(rng, num_switches, length, max_runs=6):
    """Instance set that encodes without drops or merges.

    Built per switch as runs separated by at least one fully-off frame on
    either side (gap >= 2), so concurrency never exceeds the switch count and
    no back-to-back assignment is forced.
    """
    instances = []
    for _ in range(num_switches):
        t = int(rng.integers(0, 4))
        for _ in range(int(rng.integers(0, max_runs + 1))):
            start = t + int(rng.integers(0, 6))
            end = start + int(rng.integers(0, 10))
            if end >= length:
                break
            instances.append(ActionInterval(start, end))
            t = end + 2  # at least one off frame between runs of a switch
    return instances


def spans(intervals):
    return sorted(i.span for i in intervals)
