"""Heat traces of Schroedinger operators on compact metric graphs."""
