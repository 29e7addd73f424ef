# Tests package for ddcrp-storylines
