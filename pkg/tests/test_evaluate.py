import functools
import json
import numpy as np
import pydantic
import pytest
import coca3d.config
import coca3d.evaluate
from math import exp
from coca3d.evaluate import Box3D
from coca3d.evaluate import CaptionRecord
from coca3d.evaluate import EvalRecord
from coca3d.evaluate import GroundTruth
from nltk.stem.porter import PorterStemmer


def box(x=0.0, size=1.0):
    return Box3D(center=(x, 0, 0), size=(size, size, size))


def record(caption, reference, predicted=0.0, scene_id=None, score=1.0):
    return EvalRecord(
        scene_id=scene_id,
        predicted_box=None if predicted is None else box(predicted),
        predicted_caption=caption,
        gt_box=box(),
        references=[reference],
        score=score,
    )


def test_iou3d():
    assert coca3d.evaluate.iou3d(box(), box()) == pytest.approx(1)
    assert coca3d.evaluate.iou3d(box(), box(3.0)) == 0
    assert coca3d.evaluate.iou3d(box(), box(1.0)) == 0
    assert coca3d.evaluate.iou3d(box(), box(0.5)) == pytest.approx(1 / 3)
    assert coca3d.evaluate.iou3d(box(), box(0, 0.5)) == pytest.approx(1 / 8)
    with pytest.raises(pydantic.ValidationError):
        Box3D(center=(0, 0, 0), size=(1, 0, 1))


def test_tokenize_caption():
    assert coca3d.evaluate.tokenize_caption("The red Chair, left.") == [
        "the",
        "red",
        "chair",
        "left",
    ]
    assert coca3d.evaluate.tokenize_caption(["a", "b"]) == ["a", "b"]


def test_bleu4():
    reference = "the cat sat on a mat"
    assert coca3d.evaluate.bleu4(reference, [reference]) == pytest.approx(1)
    assert coca3d.evaluate.bleu4(
        "the cat sat on the mat", [reference]
    ) == pytest.approx((1 / 12) ** 0.25)
    assert coca3d.evaluate.bleu4(
        "the cat sat on", ["the cat sat on the mat"]
    ) == pytest.approx(exp(-0.5))
    assert coca3d.evaluate.bleu4("the cat", ["the cat"]) == 0
    assert coca3d.evaluate.bleu4("", [reference]) == 0


def test_rouge_l():
    assert coca3d.evaluate.rouge_l("a b c d", ["a b c d"]) == pytest.approx(1)
    assert coca3d.evaluate.rouge_l("a b c d", ["a c d e"]) == pytest.approx(0.75)
    assert coca3d.evaluate.rouge_l("a b c d", ["e f", "a c d e"]) == pytest.approx(0.75)
    assert coca3d.evaluate.rouge_l("a b", ["c d"]) == 0


def test_cider():
    first = "a red chair left of the box"
    second = "the blue table is behind one lamp"
    scores = coca3d.evaluate.cider([first, "green mug under shelf"], [[first], [second]])
    np.testing.assert_allclose(scores, [10.0, 0.0])

    # Every n-gram shared by the whole corpus carries no weight
    scores = coca3d.evaluate.cider([first, first], [[first], [first]])
    np.testing.assert_allclose(scores, [0.0, 0.0])

    assert len(coca3d.evaluate.cider([], [])) == 0
    with pytest.raises(ValueError):
        coca3d.evaluate.cider([first], [])
    with pytest.raises(ValueError):
        coca3d.evaluate.cider([first], [[]])


def test_meteor_lite():
    assert coca3d.evaluate.meteor_lite("a red chair", ["a red chair"]) == pytest.approx(
        1 - 1 / 54
    )
    assert coca3d.evaluate.meteor_lite("red chairs", ["red chair"]) == pytest.approx(
        0.9375
    )
    assert coca3d.evaluate.meteor_lite("red box", ["blue lamp"]) == 0


def test_nms():
    a = record("a", "a", 0.0, score=0.9)
    b = record("b", "b", 0.0, score=0.8)
    c = record("c", "c", 3.0, score=0.7)
    d = record("d", "d", None, score=0.95)
    assert coca3d.evaluate.nms([c, b, a, d], 0.5) == [d, a, c]
    assert coca3d.evaluate.nms([a, b], 1.0) == [a, b]


def test_m_at_k_iou():
    records = [
        record("a red chair", "a red chair"),
        record("a b c d", "a c d e"),
    ]
    assert coca3d.evaluate.m_at_k_iou(records, "rougel", 0.5) == pytest.approx(0.875)
    assert coca3d.evaluate.m_at_k_iou(records, "rougel", 0.0) == pytest.approx(0.875)

    # The second box overlaps with IoU 1/3
    records[1] = record("a b c d", "a c d e", 0.5)
    assert coca3d.evaluate.m_at_k_iou(records, "rougel", 0.25) == pytest.approx(0.875)
    assert coca3d.evaluate.m_at_k_iou(records, "rougel", 0.5) == pytest.approx(0.5)

    # No predicted boxes
    records = [record("a red chair", "a red chair", None)] * 2
    assert coca3d.evaluate.m_at_k_iou(records, "rougel", 0.25) == 0

    with pytest.raises(ValueError):
        coca3d.evaluate.m_at_k_iou([], "rougel", 0.5)


def test_evaluate_suppresses_within_scenes():
    config = coca3d.config.Config(
        evaluation=coca3d.config.Evaluation(
            metrics=["rougel"], iou_thresholds=[0.25, 0.5], nms_threshold=0.5
        )
    )
    records = [
        record("a red chair", "a red chair", 0.0, scene_id="s0", score=0.9),
        record("a red chair", "a red chair", 0.0, scene_id="s0", score=0.8),
        record("a red chair", "a red chair", 0.0, scene_id="s1", score=0.8),
        record("a b c d", "a c d e", 0.5, scene_id="s2"),
    ]
    report = coca3d.evaluate.evaluate(config, records)
    assert report.n == 4
    assert report["rougel@0.25"] == pytest.approx((1 + 0 + 1 + 0.75) / 4)
    assert report["rougel@0.5"] == pytest.approx((1 + 0 + 1 + 0) / 4)
    assert list(report.table().columns) == ["0.25@IoU", "0.5@IoU"]

    with pytest.raises(ValueError):
        coca3d.evaluate.evaluate(config, [])


def test_evaluate_from_config_file(tmp_path):
    config_file = tmp_path / "config.yaml"
    coca3d.config.new(str(config_file))
    records = [record("a red chair", "a red chair")]
    report = coca3d.evaluate.evaluate(
        str(config_file), records, iou_thresholds=[0.5], metrics=["rougel", "bleu4"]
    )
    assert set(report.values.keys()) == {"rougel@0.5", "bleu4@0.5"}
    assert report["rougel@0.5"] == pytest.approx(1)

    filename = tmp_path / "report.json"
    report.save(str(filename))
    with open(filename) as infile:
        assert json.load(infile) == {"values": report.values, "n": 1}

    with pytest.raises(pydantic.ValidationError):
        coca3d.evaluate.evaluate(str(config_file), records, nms_threshold=2.0)


def test_align_predictions():
    ground_truth = [
        GroundTruth(scene_id="s0", object_id=0, box=box(), references=["a red chair"]),
        GroundTruth(scene_id="s0", object_id=1, box=box(3.0), references=["a lamp"]),
        GroundTruth(scene_id="s1", object_id=0, box=box(), references=["a mug"]),
    ]
    predictions = [
        CaptionRecord(scene_id="s0", object_id=0, caption="a red chair", score=0.5),
        CaptionRecord(scene_id="s1", object_id=0, caption="a mug", box=box(0.5)),
    ]
    records = coca3d.evaluate.align_predictions(predictions, ground_truth)
    assert len(records) == 3
    assert records[0].iou == pytest.approx(1)
    assert records[0].score == 0.5
    assert records[1].predicted_caption == ""
    assert records[1].iou == 0
    assert records[2].iou == pytest.approx(1 / 3)


def test_jsonl(tmp_path):
    filename = str(tmp_path / "records.jsonl")
    records = [record("a red chair", "a red chair", 0.5), record("x", "y", None)]
    coca3d.evaluate.write_jsonl(filename, records)
    assert coca3d.evaluate.read_jsonl(filename) == records
    with pytest.raises(FileNotFoundError):
        coca3d.evaluate.read_jsonl(str(tmp_path / "missing.jsonl"))


# Independent brute force versions of the caption metrics

WORDS = ["the", "a", "red", "blue", "chair", "chairs", "box", "boxes", "is", "left", "of"]


def grams(tokens, n):
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def bleu4_oracle(candidate, references):
    candidate = candidate.split()
    references = [r.split() for r in references]
    total_log = 0.0
    for n in range(1, 5):
        cand = grams(candidate, n)
        if not cand:
            return 0.0
        clipped = 0
        for g in set(cand):
            clipped += min(cand.count(g), max(grams(r, n).count(g) for r in references))
        if clipped == 0:
            return 0.0
        total_log += np.log(clipped / len(cand)) / 4
    c = len(candidate)
    r = sorted((abs(len(ref) - c), len(ref)) for ref in references)[0][1]
    return (1.0 if c > r else np.exp(1 - r / c)) * np.exp(total_log)


def lcs_oracle(a, b):
    @functools.lru_cache(maxsize=None)
    def lcs(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + lcs(i + 1, j + 1)
        return max(lcs(i + 1, j), lcs(i, j + 1))

    return lcs(0, 0)


def rouge_l_oracle(candidate, references, beta=1.2):
    candidate = candidate.split()
    best = 0.0
    for reference in references:
        reference = reference.split()
        lcs = lcs_oracle(tuple(candidate), tuple(reference))
        if lcs:
            p, r = lcs / len(candidate), lcs / len(reference)
            best = max(best, (1 + beta**2) * p * r / (r + beta**2 * p))
    return best


def meteor_oracle(candidate, references):
    stem = PorterStemmer().stem
    candidate = candidate.split()
    best = 0.0
    for reference in references:
        reference = reference.split()
        matched_c, matched_r = {}, set()
        for same in [lambda x, y: x == y, lambda x, y: stem(x) == stem(y)]:
            for i, word in enumerate(candidate):
                if i in matched_c:
                    continue
                for j, other in enumerate(reference):
                    if j not in matched_r and same(word, other):
                        matched_c[i] = j
                        matched_r.add(j)
                        break
        m = len(matched_c)
        if m == 0:
            continue
        pairs = sorted(matched_c.items())
        chunks = 1 + sum(
            1
            for (i0, j0), (i1, j1) in zip(pairs, pairs[1:])
            if (i1, j1) != (i0 + 1, j0 + 1)
        )
        p, r = m / len(candidate), m / len(reference)
        fmean = 10 * p * r / (r + 9 * p)
        best = max(best, fmean * (1 - 0.5 * (chunks / m) ** 3))
    return best


def cider_oracle(candidates, references):
    candidates = [c.split() for c in candidates]
    references = [[r.split() for r in refs] for refs in references]
    N = len(candidates)
    scores = np.zeros(N)
    for n in range(1, 5):
        vocab = sorted(
            {g for c in candidates for g in grams(c, n)}
            | {g for refs in references for r in refs for g in grams(r, n)}
        )
        df = np.array(
            [sum(any(g in grams(r, n) for r in refs) for refs in references) for g in vocab]
        )
        idf = np.log(N / np.maximum(df, 1))

        def vector(tokens):
            ts = grams(tokens, n)
            if not ts:
                return np.zeros(len(vocab))
            return np.array([ts.count(g) / len(ts) for g in vocab]) * idf

        def cosine(u, v):
            nu, nv = np.linalg.norm(u), np.linalg.norm(v)
            return 0.0 if nu == 0 or nv == 0 else float(u @ v / (nu * nv))

        for i in range(N):
            c = vector(candidates[i])
            scores[i] += np.mean([cosine(c, vector(r)) for r in references[i]])
    return 10 * scores / 4


def random_sentence(rng):
    return " ".join(rng.choice(WORDS, size=rng.integers(1, 11)))


@pytest.fixture
def sentence_pairs():
    rng = np.random.default_rng(8)
    candidates = [random_sentence(rng) for _ in range(50)]
    references = [
        [random_sentence(rng) for _ in range(rng.integers(1, 4))] for _ in range(50)
    ]
    return candidates, references


def test_caption_metrics_match_brute_force(sentence_pairs):
    for candidate, references in zip(*sentence_pairs):
        assert coca3d.evaluate.bleu4(candidate, references) == pytest.approx(
            bleu4_oracle(candidate, references), abs=1e-9
        )
        assert coca3d.evaluate.rouge_l(candidate, references) == pytest.approx(
            rouge_l_oracle(candidate, references), abs=1e-9
        )
        assert coca3d.evaluate.meteor_lite(candidate, references) == pytest.approx(
            meteor_oracle(candidate, references), abs=1e-9
        )


def test_cider_matches_brute_force(sentence_pairs):
    candidates, references = sentence_pairs
    np.testing.assert_allclose(
        coca3d.evaluate.cider(candidates, references),
        cider_oracle(candidates, references),
        rtol=0,
        atol=1e-9,
    )

    candidates = ["the red chair", "a blue box", "the chair is left of the box"]
    references = [
        ["the red chair", "a red chair"],
        ["the blue box"],
        ["the chair is left of a box", "the red chair is left of the box"],
    ]
    np.testing.assert_allclose(
        coca3d.evaluate.cider(candidates, references),
        cider_oracle(candidates, references),
        rtol=0,
        atol=1e-9,
    )


def test_cider_single_candidate_is_zero():
    assert coca3d.evaluate.cider(["a red chair"], [["a red chair"]])[0] == 0


def random_records(rng, count=12):
    return [
        record(
            random_sentence(rng),
            random_sentence(rng),
            None if rng.uniform() < 0.2 else float(rng.uniform(0, 1.2)),
            scene_id="s%d" % rng.integers(0, 3),
            score=float(score),
        )
        for score in rng.permutation(count) / count
    ]


def test_m_at_k_iou_does_not_grow_with_k():
    rng = np.random.default_rng(9)
    for _ in range(20):
        records = random_records(rng)
        for metric in ["rougel", "bleu4"]:
            values = [
                coca3d.evaluate.m_at_k_iou(records, metric, k)
                for k in np.linspace(0, 1, 11)
            ]
            assert all(b <= a for a, b in zip(values[:-1], values[1:]))


def test_nms_ignores_input_order():
    rng = np.random.default_rng(10)
    for _ in range(20):
        records = random_records(rng)
        kept = coca3d.evaluate.nms(records, 0.25)
        for _ in range(3):
            shuffled = [records[i] for i in rng.permutation(len(records))]
            assert coca3d.evaluate.nms(shuffled, 0.25) == kept
