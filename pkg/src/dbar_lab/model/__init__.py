"""Value types shared by the lab: regions, lattices, fields, options and reports."""
