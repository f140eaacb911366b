"""Templated synthetic corpora with controlled overlap between domains.

``bio``      biography/encyclopedia sentences (the attack-training domain)
``news``     shares names, cities, years and function words with ``bio`` but
             uses its own templates and content pools (medium similarity)
``clinic``   triage-style notes sharing no token (punctuation included) with ``bio``
``bio_long`` ``bio`` clauses chained into sentences of 1 to 7 clauses, for
             the text-length study
``general``  broad-vocabulary descriptive sentences; used as the reference
             corpus for the character 4-gram feature set
"""
from __future__ import annotations

import numpy as np

FIRST = ("david maria john anna peter laura james sofia michael elena robert clara thomas julia "
         "daniel nora paul emma mark lucy george alice henry rosa frank irene oscar vera "
         "victor diana samuel helen arthur olga simon grace martin ruth").split()
LAST = ("smith garcia brown miller wilson moore taylor anderson thomas jackson white harris "
        "martin clark lewis walker young allen king wright scott green baker adams nelson "
        "carter mitchell roberts turner phillips").split()
OCCUPATIONS = "doctor lawyer teacher engineer nurse farmer pilot chef artist banker".split()
OCC_EXTRA = "writer painter soldier singer architect dentist scientist judge baker carpenter".split()
NATIONS = ("american british french german italian spanish canadian mexican brazilian indian "
           "chinese japanese korean russian polish irish dutch swedish greek turkish").split()
CITIES = ("london paris berlin rome madrid boston chicago toronto sydney dublin vienna prague "
          "oslo lisbon athens seattle denver houston munich milan").split()
YEARS = [str(y) for y in range(1950, 2000)]
ADJ = "famous young retired talented local popular respected successful".split()
COUNT = "two three four five six seven eight nine ten twelve".split()
BIO_PLACES = "museum library university hospital theater cathedral stadium bridge".split()
SUBJECTS = "history music science medicine law physics painting poetry".split()

TEAMS = ("lions tigers eagles wolves hawks bears sharks falcons rangers giants "
         "pirates rockets").split()
DAYS = "monday tuesday wednesday thursday friday saturday sunday".split()
POLICY = "budget tax election reform treaty strike protest merger tariff ban".split()
OFFICIALS = "mayor senator minister governor council spokesman".split()
NEWS_VERBS = "announced rejected approved delayed criticized proposed".split()
SCORE = [str(s) for s in range(0, 8)]

SYMPTOMS = ("fever cough nausea dizziness headache fatigue vomiting rash chills wheezing "
            "palpitations numbness").split()
SEVERITY = "mild moderate severe acute chronic intermittent".split()
PRESSURE = [f"{s}/{d}" for s in (110, 120, 130, 140, 150, 160) for d in (70, 80, 90)]
DISPOSITION = "admitted discharged transferred observed referred".split()
WARDS = "cardiology neurology pediatrics oncology radiology triage".split()
PULSE = [str(p) for p in range(60, 121, 5)]


def _bio(r: np.random.Generator) -> str:
    c = lambda pool: pool[r.integers(len(pool))]
    occ = c(OCCUPATIONS + OCC_EXTRA)
    t = r.integers(10)
    if t == 0:
        return f"{c(FIRST)} {c(LAST)} is a {c(ADJ)} {c(NATIONS)} {occ} ."
    if t == 1:
        return f"{c(FIRST)} {c(LAST)} was born in {c(CITIES)} in {c(YEARS)} ."
    if t == 2:
        return f"{c(FIRST)} worked as a {occ} in {c(CITIES)} for {c(COUNT)} years ."
    if t == 3:
        return f"{c(FIRST)} {c(LAST)} , a {c(NATIONS)} {occ} , moved to {c(CITIES)} in {c(YEARS)} ."
    if t == 4:
        return f"the {c(ADJ)} {occ} {c(FIRST)} {c(LAST)} lived in {c(CITIES)} ."
    if t == 5:
        return f"{c(FIRST)} is a {occ} who studied {c(SUBJECTS)} in {c(CITIES)} ."
    if t == 6:
        return f"in {c(YEARS)} , {c(FIRST)} {c(LAST)} became a {c(ADJ)} {occ} ."
    if t == 7:
        return f"the {c(BIO_PLACES)} of {c(CITIES)} was built in {c(YEARS)} ."
    if t == 8:
        return f"{c(FIRST)} {c(LAST)} taught {c(SUBJECTS)} at the {c(BIO_PLACES)} of {c(CITIES)} ."
    return f"the {c(NATIONS)} {occ} {c(FIRST)} wrote {c(COUNT)} books about {c(SUBJECTS)} ."


def _news(r: np.random.Generator) -> str:
    c = lambda pool: pool[r.integers(len(pool))]
    t = r.integers(6)
    if t == 0:
        return f"the {c(TEAMS)} beat the {c(TEAMS)} {c(SCORE)} to {c(SCORE)} in {c(CITIES)} on {c(DAYS)} ."
    if t == 1:
        return f"the {c(OFFICIALS)} of {c(CITIES)} {c(NEWS_VERBS)} the {c(POLICY)} on {c(DAYS)} ."
    if t == 2:
        return f"on {c(DAYS)} , {c(OFFICIALS)} {c(FIRST)} {c(LAST)} {c(NEWS_VERBS)} a new {c(POLICY)} ."
    if t == 3:
        return f"fans of the {c(TEAMS)} gathered in {c(CITIES)} after the {c(POLICY)} ."
    if t == 4:
        return f"{c(FIRST)} {c(LAST)} {c(NEWS_VERBS)} the {c(POLICY)} plan in {c(YEARS)} ."
    return f"the {c(TEAMS)} signed {c(FIRST)} {c(LAST)} from the {c(TEAMS)} on {c(DAYS)} ."


def _clinic(r: np.random.Generator) -> str:
    c = lambda pool: pool[r.integers(len(pool))]
    t = r.integers(4)
    if t == 0:
        return f"patient reports {c(SEVERITY)} {c(SYMPTOMS)} plus {c(SYMPTOMS)} ; pressure {c(PRESSURE)} ; pulse {c(PULSE)}"
    if t == 1:
        return f"{c(SEVERITY)} {c(SYMPTOMS)} noted ; patient {c(DISPOSITION)} ; ward {c(WARDS)}"
    if t == 2:
        return f"pressure {c(PRESSURE)} ; pulse {c(PULSE)} ; {c(SYMPTOMS)} resolved ; {c(DISPOSITION)}"
    return f"{c(WARDS)} consult : {c(SEVERITY)} {c(SYMPTOMS)} plus {c(SYMPTOMS)} ; patient {c(DISPOSITION)}"


_BIO_CLAUSES = (
    lambda c: f"was born in {c(CITIES)} in {c(YEARS)}",
    lambda c: f"worked as a {c(OCCUPATIONS + OCC_EXTRA)} in {c(CITIES)}",
    lambda c: f"studied {c(SUBJECTS)} at the {c(BIO_PLACES)} of {c(CITIES)}",
    lambda c: f"moved to {c(CITIES)} in {c(YEARS)}",
    lambda c: f"became a {c(ADJ)} {c(OCCUPATIONS + OCC_EXTRA)}",
    lambda c: f"wrote {c(COUNT)} books about {c(SUBJECTS)}",
    lambda c: f"married {c(FIRST)} {c(LAST)} in {c(YEARS)}",
)


def _bio_long(r: np.random.Generator, n_clauses: int | None = None) -> str:
    c = lambda pool: pool[r.integers(len(pool))]
    n = int(r.integers(1, 8)) if n_clauses is None else n_clauses
    clauses = [_BIO_CLAUSES[r.integers(len(_BIO_CLAUSES))](c) for _ in range(n)]
    if n == 1:
        body = clauses[0]
    else:
        body = " , ".join(clauses[:-1]) + " and " + clauses[-1]
    return f"{c(FIRST)} {c(LAST)} {body} ."


GEN_NOUNS = (
    "river mountain forest village garden window kitchen market harbor island valley desert "
    "castle temple station factory school church tower palace prison airport highway tunnel "
    "orchestra festival journey question answer problem solution mystery treasure weather "
    "winter summer autumn spring morning evening midnight sunrise thunder lightning rainbow "
    "elephant tortoise dolphin penguin giraffe butterfly squirrel sparrow salmon octopus "
    "computer telescope microscope engine battery compass lantern ladder hammer bicycle "
    "violin trumpet guitar piano drum painting sculpture novel poem letter diary newspaper "
    "government parliament committee company industry economy agriculture democracy "
    "philosophy mathematics chemistry biology geography astronomy literature grammar "
    "blanket pillow curtain carpet mirror candle basket bottle kettle cupboard wardrobe").split()
GEN_VERBS = (
    "crossed visited described discovered protected destroyed repaired painted measured "
    "explored borrowed collected delivered examined followed gathered imagined invented "
    "observed organized performed photographed purchased recorded remembered replaced "
    "surrounded translated understood welcomed wrapped abandoned celebrated").split()
GEN_ADJ = (
    "ancient enormous fragile gentle glorious hollow invisible luminous magnificent narrow "
    "peculiar quiet remarkable shallow silent slippery splendid sturdy tremendous vivid "
    "wooden golden frozen crowded curious delightful empty faithful generous humble").split()
GEN_ADV = "quickly slowly carefully rarely often suddenly quietly eagerly gladly barely".split()


def _general(r: np.random.Generator) -> str:
    c = lambda pool: pool[r.integers(len(pool))]
    t = r.integers(4)
    if t == 0:
        return f"the {c(GEN_ADJ)} {c(GEN_NOUNS)} {c(GEN_ADV)} {c(GEN_VERBS)} the {c(GEN_NOUNS)} ."
    if t == 1:
        return f"a {c(GEN_ADJ)} {c(GEN_NOUNS)} near the {c(GEN_NOUNS)} was {c(GEN_VERBS)} in the {c(GEN_NOUNS)} ."
    if t == 2:
        return f"nobody {c(GEN_VERBS)} the {c(GEN_NOUNS)} because the {c(GEN_NOUNS)} seemed {c(GEN_ADJ)} ."
    return f"every {c(GEN_NOUNS)} and every {c(GEN_ADJ)} {c(GEN_NOUNS)} {c(GEN_VERBS)} a {c(GEN_NOUNS)} ."


DOMAINS = {"bio": _bio, "news": _news, "clinic": _clinic, "bio_long": _bio_long,
           "general": _general}


def generate(domain: str, n: int, seed: int) -> list[str]:
    r = np.random.default_rng(seed)
    make = DOMAINS[domain]
    return [make(r) for _ in range(n)]


def mixture(domains: dict[str, float], n: int, seed: int) -> list[str]:
    """Sentences drawn from several domains in the given proportions, shuffled."""
    r = np.random.default_rng(seed)
    names = sorted(domains)
    counts = [int(round(domains[d] * n)) for d in names]
    counts[-1] = n - sum(counts[:-1])
    out = [DOMAINS[d](r) for d, k in zip(names, counts) for _ in range(k)]
    order = r.permutation(len(out))
    return [out[i] for i in order]


def occupation_task(n: int = 100, seed: int = 0) -> dict:
    """Occupation inference task over the ten core occupations (JSON task layout)."""
    r = np.random.default_rng(seed)
    c = lambda pool: pool[r.integers(len(pool))]
    templates = (
        lambda o: f"{c(FIRST)} {c(LAST)} is a {c(ADJ)} {c(NATIONS)} {o} .",
        lambda o: f"{c(FIRST)} worked as a {o} in {c(CITIES)} for {c(COUNT)} years .",
        lambda o: f"the {c(ADJ)} {o} {c(FIRST)} {c(LAST)} lived in {c(CITIES)} .",
        lambda o: f"{c(FIRST)} is a {o} who studied {c(SUBJECTS)} in {c(CITIES)} .",
    )
    instances = []
    for _ in range(n):
        occ = c(OCCUPATIONS)
        text = templates[r.integers(len(templates))](occ)
        instances.append({"text": text, "gold": OCCUPATIONS.index(occ)})
    return {"attribute_name": "occupation", "candidates": list(OCCUPATIONS), "instances": instances}
