"""Product and geography classifications used when featurizing customs records."""

# HS section (industry) -> (name, first chapter, last chapter)
HS_SECTIONS = {
    1: ("Live Animals/Animal Products", 1, 5),
    2: ("Vegetable Products", 6, 14),
    3: ("Animal or Vegetable Fats/Oils", 15, 15),
    4: ("Prepared Foodstuffs", 16, 24),
    5: ("Mineral Products", 25, 27),
    6: ("Products of Chemical Industries", 28, 38),
    7: ("Plastics, Rubber", 39, 40),
    8: ("Raw Hides, Skins and Leather", 41, 43),
    9: ("Wood", 44, 46),
    10: ("Paper", 47, 49),
    11: ("Textile", 50, 63),
    12: ("Footwear", 64, 67),
    13: ("Art. of Stone, Cement", 68, 70),
    14: ("Jewelries", 71, 71),
    15: ("Base Metals", 72, 83),
    16: ("Machinery Equipment", 84, 85),
    17: ("Vehicles", 86, 89),
    18: ("Precision Instruments", 90, 92),
    19: ("Arms", 93, 93),
    20: ("Misc. Manuf. Art.", 94, 96),
    21: ("Works of Art", 97, 97),
    22: ("Special Classification Provisions", 98, 99),
}

_CHAPTER_TO_SECTION = {
    chapter: section
    for section, (_, lo, hi) in HS_SECTIONS.items()
    for chapter in range(lo, hi + 1)
}


def chapter_of(product_code: str) -> int:
    """HS chapter (2-digit sector) of a product code."""
    return int(product_code[:2])


def section_of_chapter(chapter: int) -> int:
    try:
        return _CHAPTER_TO_SECTION[chapter]
    except KeyError:
        raise ValueError(f"HS chapter {chapter} is outside 1-99") from None


def chapters_of_section(section: int) -> list[int]:
    _, lo, hi = HS_SECTIONS[section]
    # chapter 77 is reserved in the HS nomenclature
    return [c for c in range(lo, hi + 1) if c != 77]


TRANSPORT_MODES = ("land", "sea", "air", "other")

# ISO-3166 alpha-3 -> continent, for the destinations the generator draws from
# plus common extras; unknown codes map to "other".
CONTINENTS = {
    "USA": "north_america", "CAN": "north_america", "MEX": "north_america",
    "GTM": "central_america", "CRI": "central_america", "PAN": "central_america",
    "DOM": "central_america", "HND": "central_america", "SLV": "central_america",
    "ECU": "south_america", "PER": "south_america", "CHL": "south_america",
    "BRA": "south_america", "ARG": "south_america", "VEN": "south_america",
    "BOL": "south_america", "URY": "south_america", "PRY": "south_america",
    "ESP": "europe", "DEU": "europe", "NLD": "europe", "GBR": "europe",
    "ITA": "europe", "FRA": "europe", "BEL": "europe",
    "CHN": "asia", "JPN": "asia", "KOR": "asia", "IND": "asia", "TUR": "asia",
    "AUS": "oceania", "ZAF": "africa", "MAR": "africa",
}


def continent_of(destination: str) -> str:
    return CONTINENTS.get(destination, "other")
