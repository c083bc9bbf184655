"""Oracle values written by generate.py; do not edit by hand."""

LOG_DENSITY_THREECOMP_X12 = -4.338320683419271056942351
WEIGHTS_FIM_TWO_FAR = 4.0
WEIGHTS_FIM_THREECOMP_11 = 5.326164042649818
DELTA_PRIOR_AT_ZERO = -0.23367791395760898
