from puprior.data_io import SyntheticSpec, generate_synthetic


def synthetic(gamma=0.25, prior=0.7, n=200, n_prime=200, seed=0):
    return generate_synthetic(SyntheticSpec(gamma, prior, n, n_prime, seed))
