"""Shared fixtures: the hospital source/warehouse pair and snapshot factory."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from tdw.dsl import parse_warehouse_def, resolve
from tdw.source import ingest_snapshot, parse_source_schema
from tdw.temporal import Instant

FIXTURES = Path(__file__).parent / "fixtures"


def year(y: int) -> Instant:
    return Instant("year", y - 1970)


@pytest.fixture(scope="session")
def odl_text() -> str:
    return (FIXTURES / "hopital.odl").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def edw_text() -> str:
    return (FIXTURES / "hopital.edw").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def edw_without_services_text() -> str:
    return (FIXTURES / "hopital_sans_services.edw").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def src_schema(odl_text):
    return parse_source_schema(odl_text)


@pytest.fixture()
def wdef(edw_text):
    # function-scoped: resolution annotates the parsed definition's classes
    return parse_warehouse_def(edw_text)


@pytest.fixture()
def schema(wdef, src_schema):
    return resolve(wdef, src_schema)


def _adresse(libelle: str, ville: str, cp: int) -> dict:
    return {"libelle": libelle, "ville": ville, "code_postal": cp}


def hospital_records(
    at_year: int,
    *,
    with_extra_surgeon: bool = False,
    extra_surgeon_category: str = "chirurgie",
    extra_private_team: bool = False,
) -> list[dict]:
    """The hospital source at a given year.

    Budgets and the surgeons' incomes drift every year so each yearly
    refresh sees a value change. The optional extra surgeon works in no
    service, which lets tests move him out of the selection predicate
    (or drop him) without breaking source consistency. The optional
    private team adds a surgeon working only at the private clinic.
    """
    step = at_year - 1990
    records = [
        {
            "interface": "PRATICIEN",
            "id": "p1",
            "values": {
                "nom": "Bernard",
                "prénom": "Alice",
                "adresse": _adresse("3 rue des Lilas", "Toulouse", 31000),
                "année_naissance": 1975,
                "no_praticien": "PR-001",
                "catégorie": "chirurgie",
                "spécialité": "orthopédie",
                "revenus": 90000 + 1000 * step,
            },
            "links": {"travaille": ["s1"], "dirige": ["s1"]},
        },
        {
            "interface": "PRATICIEN",
            "id": "p2",
            "values": {
                "nom": "Dupont",
                "prénom": "Marc",
                "adresse": _adresse("8 avenue Foch", "Toulouse", 31400),
                "année_naissance": 1960,
                "no_praticien": "PR-002",
                "catégorie": "chirurgie",
                "spécialité": "cardiaque",
                "revenus": 120000 + 2000 * step,
            },
            "links": {"travaille": ["s1", "s3"], "dirige": ["s3"]},
        },
        {
            "interface": "PRATICIEN",
            "id": "p3",
            "values": {
                "nom": "Petit",
                "prénom": "Claire",
                "adresse": _adresse("12 place du Capitole", "Toulouse", 31000),
                "année_naissance": 1968,
                "no_praticien": "PR-003",
                "catégorie": "cardiologie",
                "spécialité": "rythmologie",
                "revenus": 80000,
            },
            "links": {"travaille": [], "dirige": []},
        },
        {
            "interface": "ETABLISSEMENT",
            "id": "e1",
            "values": {
                "nom": "CHU Purpan",
                "statut": "public",
                "adresse": _adresse("330 avenue de Grande-Bretagne", "Toulouse", 31059),
                "budget": 2000000 + 50000 * step,
            },
            "links": {"organisation": ["s1", "s2"]},
        },
        {
            "interface": "ETABLISSEMENT",
            "id": "e2",
            "values": {
                "nom": "Hôpital Nord",
                "statut": "public",
                "adresse": _adresse("1 rue de la Santé", "Paris", 75014),
                "budget": 1500000 + 30000 * step,
            },
            "links": {"organisation": ["s3"]},
        },
        {
            "interface": "ETABLISSEMENT",
            "id": "e3",
            "values": {
                "nom": "Clinique Pasteur",
                "statut": "privé",
                "adresse": _adresse("45 avenue de Lombez", "Toulouse", 31300),
                "budget": 900000,
            },
            "links": {"organisation": ["s4"] if extra_private_team else []},
        },
        {
            "interface": "SERVICE",
            "id": "s1",
            "values": {"nom": "Chirurgie générale", "téléphone": "05 61 11 22 33"},
            "links": {"équipe": ["p1", "p2"], "est_dirigé": ["p1"]},
        },
        {
            "interface": "SERVICE",
            "id": "s2",
            "values": {"nom": "Urgences", "téléphone": "05 61 11 22 44"},
            "links": {"équipe": [], "est_dirigé": []},
        },
        {
            "interface": "SERVICE",
            "id": "s3",
            "values": {"nom": "Chirurgie cardiaque", "téléphone": "01 40 55 66 77"},
            "links": {"équipe": ["p2"], "est_dirigé": ["p2"]},
        },
        {
            "interface": "PATIENT",
            "id": "pa1",
            "values": {
                "nom": "Martin",
                "prénom": "Luc",
                "adresse": _adresse("7 rue Neuve", "Blagnac", 31700),
                "année_naissance": 1952,
                "no_insee": "152033100001",
                "cle_insee": "97",
            },
            "links": {},
        },
        {
            "interface": "CONSULTATION",
            "id": "c1",
            "values": {
                "date": f"{at_year}-03-15",
                "commentaires": "contrôle annuel",
                "diagnostic": "RAS",
                "analyses": ["img-001"],
            },
            "links": {"patient": ["pa1"], "praticien": ["p3"]},
        },
    ]
    if with_extra_surgeon:
        records.append(
            {
                "interface": "PRATICIEN",
                "id": "p4",
                "values": {
                    "nom": "Roux",
                    "prénom": "Jean",
                    "adresse": _adresse("2 impasse Verte", "Muret", 31600),
                    "année_naissance": 1980,
                    "no_praticien": "PR-004",
                    "catégorie": extra_surgeon_category,
                    "spécialité": "viscérale",
                    "revenus": 70000,
                },
                "links": {"travaille": [], "dirige": []},
            }
        )
    if extra_private_team:
        records.append(
            {
                "interface": "PRATICIEN",
                "id": "p5",
                "values": {
                    "nom": "Blanc",
                    "prénom": "Eva",
                    "adresse": _adresse("9 rue Basse", "Toulouse", 31000),
                    "année_naissance": 1972,
                    "no_praticien": "PR-005",
                    "catégorie": "chirurgie",
                    "spécialité": "plastique",
                    "revenus": 95000,
                },
                "links": {"travaille": ["s4"], "dirige": ["s4"]},
            }
        )
        records.append(
            {
                "interface": "SERVICE",
                "id": "s4",
                "values": {"nom": "Chirurgie esthétique", "téléphone": "05 62 00 00 00"},
                "links": {"équipe": ["p5"], "est_dirigé": ["p5"]},
            }
        )
    return records


def snapshot_lines(records: list[dict]) -> list[str]:
    return [json.dumps(r, ensure_ascii=False) for r in records]


@pytest.fixture()
def make_snapshot(src_schema):
    def factory(at_year: int, **knobs):
        records = hospital_records(at_year, **knobs)
        return ingest_snapshot(src_schema, snapshot_lines(records), year(at_year))

    return factory
