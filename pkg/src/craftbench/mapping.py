"""Free-form goal phrases -> catalog skills.

A phrase that parses as a goal call maps straight to the matching skill;
anything else is scored against every skill description with a padded
character-trigram cosine and must clear a similarity threshold.
"""
from __future__ import annotations

import re
from collections import Counter
from math import sqrt

from .dsl import GoalCall, GoalVerb, PlanParseError, parse_call
from .world import SkillCatalog, SkillProfile

SIMILARITY_THRESHOLD = 0.20


class UnknownGoal(Exception):
    def __init__(self, phrase: str, best: str | None = None, score: float = 0.0):
        super().__init__(f"no skill matches {phrase!r} (best={best}, score={score:.3f})")
        self.phrase = phrase
        self.best = best
        self.score = score


def trigram_features(text: str) -> Counter:
    """Multiset of character trigrams over '#'-padded lowercase words."""
    features: Counter = Counter()
    for word in re.findall(r"[a-z0-9_]+", text.lower()):
        padded = f"#{word}#"
        for i in range(len(padded) - 2):
            features[padded[i : i + 3]] += 1
    return features


def trigram_cosine(a: str, b: str) -> float:
    fa, fb = trigram_features(a), trigram_features(b)
    if not fa or not fb:
        return 0.0
    dot = sum(fa[g] * fb[g] for g in fa if g in fb)
    if dot == 0:
        return 0.0
    norm = sqrt(sum(v * v for v in fa.values())) * sqrt(sum(v * v for v in fb.values()))
    return dot / norm


def _skill_for_call(call: GoalCall, skills: SkillCatalog) -> SkillProfile | None:
    category = call.category()
    if category in (GoalVerb.MINE, GoalVerb.KILL):
        rows = [
            s
            for s in skills.skills
            if s.verb == category.value and s.target_item == call.item and s.units == 1
        ]
        if not rows:
            return None
        if call.tool:
            for row in rows:
                if row.tool == call.tool:
                    return row
        return rows[0]
    if category is GoalVerb.SMELT:
        return next((s for s in skills.skills if s.verb == "smelt"), None)
    if category is GoalVerb.EQUIP:
        return next((s for s in skills.skills if s.verb == "equip"), None)
    wants_station = call.station is not None
    for s in skills.skills:
        if s.verb == "craft" and s.target_item is None and (s.tool is not None) == wants_station:
            return s
    return None


def map_free_goal(
    phrase: str, skills: SkillCatalog, threshold: float = SIMILARITY_THRESHOLD
) -> SkillProfile:
    """Resolve a goal phrase to a skill, or raise :class:`UnknownGoal`.

    Deterministic: the exact-grammar path wins when the phrase parses;
    otherwise the argmax of the trigram cosine over skill descriptions,
    first listed wins ties.
    """
    if not skills.skills:
        raise UnknownGoal(phrase)
    try:
        call = parse_call(phrase)
    except PlanParseError:
        call = None
    if call is not None:
        skill = _skill_for_call(call, skills)
        if skill is not None:
            return skill

    best: SkillProfile | None = None
    best_score = -1.0
    for skill in skills.skills:
        score = trigram_cosine(phrase, skill.description)
        if score > best_score:
            best, best_score = skill, score
    if best is None or best_score < threshold:
        raise UnknownGoal(phrase, best.id if best else None, max(best_score, 0.0))
    return best
