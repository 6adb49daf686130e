"""dB / dBm conversions. Everything inside the package is linear SI."""

import math


def db_to_linear(x_db):
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x):
    return 10.0 * math.log10(x)


def dbm_to_watts(x_dbm):
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def watts_to_dbm(x_w):
    return 10.0 * math.log10(x_w) + 30.0
