import pytest

from nlsql.sketch import Table, TableSchema


@pytest.fixture
def tennis_table() -> Table:
    return Table(
        TableSchema("1-tennis", ("Result", "Court", "Player"),
                    ("text", "text", "text")),
        (
            ("winner", "clay", "Rafael Nadal"),
            ("runner-up", "grass", "Novak Djokovic"),
            ("winner", "hard", "Jarkko Nieminen"),
        ),
    )


@pytest.fixture
def motogp_table() -> Table:
    return Table(
        TableSchema("2-14125739-3", ("Rider", "Manufacturer", "Laps", "Grid"),
                    ("text", "text", "real", "real")),
        (
            ("Nicolas Terol", "Derbi", "1", "20"),
            ("Mike Di Meglio", "Honda", "24", "29"),
            ("Stevie Bonsey", "KTM", "0", "25"),
        ),
    )


@pytest.fixture
def league_table() -> Table:
    return Table(
        TableSchema("3-league", ("Country", "League"), ("text", "text")),
        (
            ("Canada", "NHL"),
            ("USA", "MLB"),
            ("Spain", "NBA"),
        ),
    )
