#
# coca3d.command_line.eval.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#


import logging
import time
import coca3d.command_line
import coca3d.data
import coca3d.evaluate
from argparse import ArgumentParser
from typing import List


__all__ = ["evaluate"]


# Get the logger
logger = logging.getLogger(__name__)


def get_description():
    """
    Get the program description

    """
    return "Score predicted captions and boxes against the ground truth"


def get_parser(parser: ArgumentParser = None) -> ArgumentParser:
    """
    Get the coca3d.eval parser

    """

    # Initialise the parser
    if parser is None:
        parser = ArgumentParser(description=get_description())

    # Add some command line arguments
    parser.add_argument(
        "-c",
        "--config",
        type=str,
        default=None,
        dest="config",
        help="The yaml file to configure the evaluation",
    )
    parser.add_argument(
        "-p",
        "--predictions",
        type=str,
        default=None,
        dest="predictions",
        help="The JSON lines captions written by the caption command",
    )
    parser.add_argument(
        "-d",
        "--dataset",
        type=str,
        default=None,
        dest="dataset",
        help="The dataset directory holding the ground truth",
    )
    parser.add_argument(
        "-r",
        "--records",
        type=str,
        default=None,
        dest="records",
        help="JSON lines of records already aligned to the ground truth",
    )
    parser.add_argument(
        "--split",
        type=str,
        choices=["train", "val", "test", "all"],
        default="test",
        dest="split",
        help="The split of the ground truth",
    )
    parser.add_argument(
        "-o",
        "--output",
        type=str,
        default=None,
        dest="output",
        help="The JSON file for the metric report",
    )
    parser.add_argument(
        "--iou",
        type=coca3d.command_line.float_list,
        default=None,
        dest="iou_thresholds",
        help="The comma separated IoU thresholds, e.g. 0.25,0.5",
    )
    parser.add_argument(
        "--nms-threshold",
        type=float,
        default=None,
        dest="nms_threshold",
        help="The NMS IoU threshold",
    )
    parser.add_argument(
        "--metrics",
        type=coca3d.command_line.str_list,
        default=None,
        dest="metrics",
        help="The comma separated metrics, e.g. cider,bleu4,rougel,meteor",
    )

    return parser


def load_records(args) -> List[coca3d.evaluate.EvalRecord]:
    """
    Read the aligned records or align the predictions to the dataset

    """
    if args.records is not None:
        return coca3d.evaluate.read_jsonl(args.records)
    if args.predictions is None or args.dataset is None:
        raise coca3d.command_line.UsageError(
            "Either --records or both --predictions and --dataset are needed"
        )
    predictions = coca3d.evaluate.read_jsonl(
        args.predictions, coca3d.evaluate.CaptionRecord
    )
    dataset = coca3d.data.load_dataset(args.dataset)
    split = None if args.split == "all" else args.split
    return coca3d.evaluate.align_predictions(predictions, dataset.ground_truth(split))


def evaluate_impl(args):
    """
    Evaluate the predictions

    """

    # Get the start time
    start_time = time.time()

    # Configure some basic logging
    coca3d.command_line.configure_logging()

    # Do the work
    report = coca3d.evaluate.evaluate(
        args.config,
        load_records(args),
        iou_thresholds=args.iou_thresholds,
        nms_threshold=args.nms_threshold,
        metrics=args.metrics,
    )
    if args.output is not None:
        report.save(args.output)
    print(report)

    # Print output
    logger.info("Time taken: %.1f seconds" % (time.time() - start_time))


def evaluate(args: List[str] = None):
    """
    Evaluate the predictions

    """
    evaluate_impl(get_parser().parse_args(args=args))
