"""Phase retrieval from probability densities via the Bohmian equations."""
