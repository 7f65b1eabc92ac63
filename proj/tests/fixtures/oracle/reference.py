def clip_values(a, lo, hi):
    return np.clip(a, lo, hi)
