"""Small shared builders for model tests."""

from __future__ import annotations

import numpy as np

from citeneed import encoder as E
from citeneed.corpus import LabeledInstance, ReasonInstance, Statement, tokenize
from citeneed.models import NeedModel, ReasonModel
from citeneed.numerics import ParamSlot, grad_check, make_rng

FIXTURE_SENTENCES = [
    ("The mayor claimed the bridge cost millions.", "History", False),
    ("It rained.", "", True),
    ("Critics praised the second album widely.", "Reception", False),
]


def statement(text, section="History", lead=False, article="t1"):
    return Statement(article, section, lead, text, tokenize(text))


def fixture_statements():
    return [statement(t, s, l) for t, s, l in FIXTURE_SENTENCES]


def tiny_model(variant, statements=None, seed=0, embed=3, hidden=2, cls=NeedModel):
    statements = statements or fixture_statements()
    vocab = E.Vocabulary.build(s.tokens for s in statements)
    sections = None
    if variant.endswith("S"):
        sections = E.SectionEmbeddings.build(((s.section_heading, s.is_lead) for s in statements), 1,
                                             make_rng(0)).index
    model = cls(variant, vocab, sections, embed, hidden)
    model.init_params(make_rng(seed))
    # non-zero biases so their gradients are exercised too
    rng = make_rng(seed + 100)
    for name, v in model.params.items():
        if ".b" in name:
            v[...] = 0.1 * rng.standard_normal(v.shape)
    model._slots = None
    return model


def model_grad_check(model, statements, targets, h=1e-5, tol=1e-4):
    _, grads = model.loss_and_grads(statements, targets)
    slots = [ParamSlot(n, model.params[n], grads[n].copy()) for n in model.params]
    return grad_check(lambda: model.loss(statements, targets), slots, h=h, tol=tol)
