"""Reference schedule values (four decimals) for NFE 3 to 10."""

UNIFORM = {
    3: [80.0, 6.9503, 1.2867, 0.002],
    4: [80.0, 11.7343, 2.8237, 0.8565, 0.002],
    5: [80.0, 16.5063, 4.7464, 1.7541, 0.6502, 0.002],
    6: [80.0, 20.9656, 6.9503, 2.8237, 1.2867, 0.5272, 0.002],
    7: [80.0, 25.0154, 9.3124, 4.0679, 2.0043, 1.0249, 0.4447, 0.002],
    8: [80.0, 28.6496, 11.7343, 5.4561, 2.8237, 1.5621, 0.8565, 0.3852, 0.002],
    9: [80.0, 31.8981, 14.1472, 6.9503, 3.7419, 2.1599, 1.2867, 0.7382, 0.3401, 0.002],
    10: [80.0, 34.8018, 16.5063, 8.5141, 4.7464, 2.8237, 1.7541, 1.0985, 0.6502, 0.3047, 0.002],
}

LOGSNR = {
    3: [80.0, 2.3392, 0.0684, 0.002],
    4: [80.0, 5.6569, 0.4, 0.0283, 0.002],
    5: [80.0, 9.609, 1.1542, 0.1386, 0.0167, 0.002],
    6: [80.0, 13.6798, 2.3392, 0.4, 0.0684, 0.0117, 0.002],
    7: [80.0, 17.6057, 3.8745, 0.8527, 0.1876, 0.0413, 0.0091, 0.002],
    8: [80.0, 21.2732, 5.6569, 1.5042, 0.4, 0.1064, 0.0283, 0.0075, 0.002],
    9: [80.0, 24.6462, 7.5929, 2.3392, 0.7207, 0.222, 0.0684, 0.0211, 0.0065, 0.002],
    10: [80.0, 27.7258, 9.609, 3.3302, 1.1542, 0.4, 0.1386, 0.048, 0.0167, 0.0058, 0.002],
}

POLYNOMIAL = {
    3: [80.0, 9.7232, 0.47, 0.002],
    4: [80.0, 17.5278, 2.5152, 0.1698, 0.002],
    5: [80.0, 24.4083, 5.8389, 0.9654, 0.0851, 0.002],
    6: [80.0, 30.1833, 9.7232, 2.5152, 0.47, 0.0515, 0.002],
    7: [80.0, 34.9922, 13.6986, 4.6371, 1.2866, 0.2675, 0.0352, 0.002],
    8: [80.0, 39.0167, 17.5278, 7.1005, 2.5152, 0.7434, 0.1698, 0.0261, 0.002],
    9: [80.0, 42.4152, 21.1087, 9.7232, 4.0661, 1.5017, 0.47, 0.1166, 0.0204, 0.002],
    10: [80.0, 45.3137, 24.4083, 12.3816, 5.8389, 2.5152, 0.9654, 0.3183, 0.0851, 0.0167, 0.002],
}

GITS = {
    3: [80.0, 3.8811, 0.9654, 0.002],
    4: [80.0, 5.8389, 1.8543, 0.47, 0.002],
    5: [80.0, 6.6563, 2.1632, 0.8119, 0.2107, 0.002],
    6: [80.0, 10.9836, 3.8811, 1.584, 0.5666, 0.1698, 0.002],
    7: [80.0, 12.3816, 3.8811, 1.584, 0.5666, 0.1698, 0.0395, 0.002],
    8: [80.0, 10.9836, 3.8811, 1.8543, 0.9654, 0.47, 0.2107, 0.0665, 0.002],
    9: [80.0, 12.3816, 4.459, 2.1632, 1.1431, 0.5666, 0.2597, 0.1079, 0.03, 0.002],
    10: [80.0, 12.3816, 4.459, 2.1632, 1.1431, 0.5666, 0.3183, 0.1698, 0.0665, 0.0225, 0.002],
}

