#
# coca3d.futures.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#
import logging


__all__ = ["as_completed", "factory"]


# Get the logger
logger = logging.getLogger(__name__)


def as_completed(futures):
    import dask.distributed

    return dask.distributed.as_completed(futures)


def factory(method="local", max_workers=1):
    """
    Configure the future to use for parallel processing

    Args:
        method (str): The cluster method (local)
        max_workers (int): The number of worker processes

    """
    import dask.distributed

    if method == "local":
        # One process and one thread per worker. The client owns the cluster
        # so closing the client also stops the workers
        executor = dask.distributed.Client(
            n_workers=max(1, max_workers),
            threads_per_worker=1,
            processes=True,
            dashboard_address=None,
        )
    else:
        raise RuntimeError(f"Unknown multiprocessing method: {method}")

    # Return the executor
    return executor
