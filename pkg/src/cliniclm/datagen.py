"""Deterministic synthetic data generators.

Everything here is template-and-word-bank text driven by Philox streams:
clinical-style note corpora for tokenizer and LM training, the same
corpora with identifier snippets injected at known values for
de-identification recall checks, and a separable relation-extraction task
whose labels follow lexical cues, used to exercise soft-prompt tuning end
to end. No real patient data, names, or identifiers appear anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tasks import Triplet, serialize_triplets
from .text import NoteDocument

# -- clinical-style corpus ------------------------------------------------

_SYMPTOMS = [
    "shortness of breath", "chest tightness", "intermittent cough", "fatigue",
    "dizziness", "palpitations", "lower back pain", "joint stiffness",
    "mild headache", "nausea", "heartburn", "ankle swelling", "blurred vision",
    "tingling in both hands", "poor sleep", "loss of appetite",
]
_CONDITIONS = [
    "hypertension", "hyperlipidemia", "type 2 diabetes", "asthma",
    "osteoarthritis", "seasonal allergies", "gastroesophageal reflux",
    "chronic sinusitis", "anemia", "hypothyroidism", "mild depression",
]
_MEDS = [
    "lisinopril", "metformin", "atorvastatin", "albuterol", "omeprazole",
    "levothyroxine", "amlodipine", "sertraline", "ibuprofen", "loratadine",
]
_FINDINGS = [
    "clear lungs bilaterally", "regular heart rate and rhythm",
    "no peripheral edema", "mild tenderness on palpation",
    "normal bowel sounds", "no focal neurological deficits",
    "well healed surgical scar", "trace pitting edema at the ankles",
]
_PLANS = [
    "continue current medications", "increase fluid intake",
    "repeat labs in two weeks", "schedule an echocardiogram",
    "start a short course of physical therapy", "advance diet as tolerated",
    "follow up in clinic in one month", "obtain a chest radiograph",
]
_UNITS = ["days", "weeks", "months"]

SECTION_NAMES = [
    "CHIEF COMPLAINT",
    "HISTORY OF PRESENT ILLNESS",
    "PAST MEDICAL HISTORY",
    "MEDICATIONS",
    "ASSESSMENT/PLAN",
]


def _pick(rng: np.random.Generator, bank: list[str]) -> str:
    return bank[int(rng.integers(0, len(bank)))]


def _hpi_sentences(rng: np.random.Generator) -> list[str]:
    n = int(rng.integers(4, 8))
    out = []
    for _ in range(n):
        kind = int(rng.integers(0, 4))
        if kind == 0:
            out.append(
                f"The patient reports {_pick(rng, _SYMPTOMS)} for the past "
                f"{int(rng.integers(2, 12))} {_pick(rng, _UNITS)}."
            )
        elif kind == 1:
            out.append(f"Denies {_pick(rng, _SYMPTOMS)} and {_pick(rng, _SYMPTOMS)}.")
        elif kind == 2:
            out.append(f"Symptoms are partially relieved by {_pick(rng, _MEDS)}.")
        else:
            out.append(f"No recent change in {_pick(rng, _SYMPTOMS)} was noted.")
    return out


def make_note(rng: np.random.Generator, doc_id: str, source: str = "real") -> NoteDocument:
    sections: list[tuple[str, str]] = []
    sections.append(("CHIEF COMPLAINT", f"Evaluation of {_pick(rng, _SYMPTOMS)} in the setting of {_pick(rng, _CONDITIONS)}."))
    sections.append(("HISTORY OF PRESENT ILLNESS", " ".join(_hpi_sentences(rng))))
    pmh = ", ".join(sorted({_pick(rng, _CONDITIONS) for _ in range(int(rng.integers(2, 5)))}))
    sections.append(("PAST MEDICAL HISTORY", f"Notable for {pmh}."))
    meds = []
    for _ in range(int(rng.integers(2, 5))):
        meds.append(f"{_pick(rng, _MEDS)} {int(rng.integers(1, 8)) * 5} mg daily")
    sections.append(("MEDICATIONS", "; ".join(meds) + "."))
    plan = " ".join(
        f"{p.capitalize()}." for p in sorted({_pick(rng, _PLANS) for _ in range(int(rng.integers(2, 4)))})
    )
    exam = f"Exam shows {_pick(rng, _FINDINGS)} and {_pick(rng, _FINDINGS)}."
    sections.append(("ASSESSMENT/PLAN", f"{exam} {plan}"))
    return NoteDocument(doc_id=doc_id, sections=sections, source=source)


def make_clinical_corpus(n_docs: int = 600, seed: int = 0) -> list[NoteDocument]:
    rng = np.random.Generator(np.random.Philox(key=seed))
    return [make_note(rng, f"note-{i:05d}") for i in range(n_docs)]


# -- identifier-injection fixtures -----------------------------------------

_FIRST = ["Alice", "Brian", "Carla", "David", "Elena", "Frank", "Grace", "Henry", "Irene", "Jane"]
_LAST = ["Doe", "Smith", "Johnson", "Williams", "Brown", "Jones", "Garcia", "Miller", "Davis", "Lopez"]
_CITY = ["Springfield", "Riverton", "Lakewood", "Fairview", "Madison", "Greenville"]
_ST = ["FL", "GA", "OH", "TX", "CO", "OR"]


@dataclass(frozen=True)
class PhiInjection:
    doc_id: str
    category: str
    surrogate: str
    value: str


def _phi_snippets(rng: np.random.Generator) -> list[tuple[str, str, str, str]]:
    """(category, surrogate, value, sentence) covering all identifier classes."""
    first, last = _pick(rng, _FIRST), _pick(rng, _LAST)
    name = f"{first} {last}"
    city, st = _pick(rng, _CITY), _pick(rng, _ST)
    d = int(rng.integers(1, 28))
    mo = int(rng.integers(1, 12))
    phone = f"352-555-{int(rng.integers(0, 10000)):04d}"
    fax = f"904-555-{int(rng.integers(0, 10000)):04d}"
    zipcode = f"{int(rng.integers(10000, 99999))}"
    mrn = f"{int(rng.integers(1000000, 9999999))}"
    acct = f"{int(rng.integers(10000000, 99999999))}"
    plan = f"AB{int(rng.integers(1000000, 9999999))}"
    lic = f"B{int(rng.integers(1000000, 9999999))}"
    vin = "1HGCM82633A" + f"{int(rng.integers(0, 999999)):06d}"
    dev = f"PM-{int(rng.integers(10000, 99999))}-AX"
    url = f"https://portal.example.org/visit/{int(rng.integers(100, 999))}"
    ip = f"10.0.{int(rng.integers(0, 255))}.{int(rng.integers(1, 255))}"
    bio = f"FP-{int(rng.integers(10000, 99999))}"
    img = f"IMG_{int(rng.integers(1000, 9999))}.png"
    study = f"STU-{int(rng.integers(1000, 9999))}"
    age = int(rng.integers(21, 95))
    ssn = f"{int(rng.integers(100, 899))}-{int(rng.integers(10, 99))}-{int(rng.integers(1000, 9999))}"
    date = f"{mo:02d}/{d:02d}/20{int(rng.integers(10, 24))}"
    addr = f"{int(rng.integers(10, 999))} Maple Street"
    return [
        ("names", "NAME", name, f"Ms. {name} was accompanied by her spouse."),
        ("geographic", "LOCATION", addr, f"Home address is {addr}, second floor."),
        ("geographic", "LOCATION", f"{city}, {st} {zipcode}", f"Relocated from {city}, {st} {zipcode} last year."),
        ("dates", "DATE", date, f"Seen in clinic on {date} for routine follow-up."),
        ("dates", "AGE", str(age), f"This is a {age}-year-old patient with stable vitals."),
        ("phone", "PHONE", phone, f"Call {phone} with any questions."),
        ("fax", "FAX", fax, f"Fax: {fax} for outside records."),
        ("email", "EMAIL", "care.team@example-clinic.org", "Reach the team at care.team@example-clinic.org anytime."),
        ("ssn", "SSN", ssn, f"SSN {ssn} verified at registration."),
        ("mrn", "MRN", mrn, f"MRN: {mrn} confirmed on the wristband."),
        ("health_plan", "HEALTHPLAN", plan, f"Member ID: {plan} effective this year."),
        ("account", "ACCOUNT", acct, f"Account number: {acct} was billed in error."),
        ("license", "LICENSE", lic, f"License no. {lic} expires next spring."),
        ("vehicle", "VEHICLE", vin, f"VIN {vin} recorded after the collision."),
        ("device", "DEVICE", dev, f"Pacemaker serial number: {dev} interrogated today."),
        ("url", "URL", url, f"Instructions posted at {url} before discharge."),
        ("ip", "IP", ip, f"Remote reading submitted from {ip} overnight."),
        ("biometric", "BIOMETRIC", bio, f"Fingerprint ID: {bio} enrolled for the med cabinet."),
        ("photo", "PHOTO", img, f"Wound photo file: {img} attached to the chart."),
        ("unique_id", "UNIQUEID", study, f"Study ID: {study} assigned at enrollment."),
    ]


def make_phi_corpus(n_docs: int = 30, seed: int = 7) -> tuple[list[NoteDocument], list[PhiInjection]]:
    """Clean notes with identifier sentences spliced in at known values."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    docs: list[NoteDocument] = []
    injections: list[PhiInjection] = []
    snippet_cycle = 0
    for i in range(n_docs):
        doc = make_note(rng, f"phi-{i:05d}")
        snippets = _phi_snippets(rng)
        take = 4 if n_docs * 4 >= len(snippets) * 2 else len(snippets)
        chosen = [snippets[(snippet_cycle + k) % len(snippets)] for k in range(take)]
        snippet_cycle += take
        sections = list(doc.sections)
        for category, surrogate, value, sentence in chosen:
            name, body = sections[1]
            sections[1] = (name, body + " " + sentence)
            injections.append(PhiInjection(doc_id=doc.doc_id, category=category, surrogate=surrogate, value=value))
        docs.append(NoteDocument(doc_id=doc.doc_id, sections=sections, source=doc.source))
    return docs, injections


# -- separable relation-extraction task ------------------------------------

RELATION_CUES = {
    "activates": "agonist",
    "blocks": "antagonist",
    "inhibits": "inhibitor",
    "binds": "ligand",
    "stabilizes": "stabilizer",
    "degrades": "degrader",
    "transports": "substrate",
    "amplifies": "potentiator",
}

RE_HEADS = [
    "dorvexin", "altrapine", "mezolide", "kartinol", "selvamab", "tubrafen",
    "oxandrene", "pivolast", "reximode", "calvastin", "nubitrol", "femarex",
]
RE_TAILS = [
    "sigmastat", "betakinase", "deltaporin", "gammalase", "kappaduct",
    "mucarrier", "thetagen", "omegapump", "alphaflux", "rhosensor",
]

# Contexts carry bracket-marked entities (the usual relation-extraction
# input convention). One rigid template keeps token geometry constant, which
# a two-layer model needs to learn the entity-copy attention at desk scale.
_RE_TEMPLATES = [
    "the assay showed that [{head}] {cue} [{tail}].",
]

# Clause lines in the pretraining stream open with this marker, so the
# fraction of documents carrying a clause can stay high without the marker
# ever being the most likely continuation of a context line.
CLAUSE_MARKER = "=> "


@dataclass(frozen=True)
class ReExample:
    text: str
    triplet: Triplet

    @property
    def target_text(self) -> str:
        return serialize_triplets([self.triplet])


def make_re_example(rng: np.random.Generator) -> ReExample:
    head = _pick(rng, RE_HEADS)
    tail = _pick(rng, RE_TAILS)
    cue = _pick(rng, list(RELATION_CUES))
    template = _pick(rng, _RE_TEMPLATES)
    text = template.format(head=head, cue=cue, tail=tail)
    return ReExample(text=text, triplet=Triplet(head=head, tail=tail, relation=RELATION_CUES[cue]))


def make_re_examples(n: int, seed: int = 0) -> list[ReExample]:
    rng = np.random.Generator(np.random.Philox(key=seed))
    return [make_re_example(rng) for _ in range(n)]


def make_re_pretrain_text(n_docs: int = 4000, clause_fraction: float = 0.45, seed: int = 1) -> str:
    """Line-per-document stream: every doc is a context sentence, and a
    fraction also carry their serialized relation clause on the next line,
    opened by CLAUSE_MARKER."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    lines: list[str] = []
    for _ in range(n_docs):
        ex = make_re_example(rng)
        lines.append(ex.text)
        if rng.random() < clause_fraction:
            lines.append(CLAUSE_MARKER + ex.target_text)
    return "\n".join(lines) + "\n"
