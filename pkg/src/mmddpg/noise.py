import numpy as np


class OUNoise:
    """Ornstein-Uhlenbeck exploration noise.

    ``xi <- xi + theta * (mu - xi) * dt + sigma * sqrt(dt) * eps`` with
    ``eps ~ N(0, I)``. With ``dt = 1`` this is an AR(1) process whose
    stationary variance is ``sigma^2 dt / (1 - (1 - theta dt)^2)``.
    """

    def __init__(self, dim, rng, theta=0.15, mu=0.0, sigma=0.2, dt=1.0):
        if theta < 0 or sigma < 0 or not dt > 0:
            raise ValueError("need theta >= 0, sigma >= 0, dt > 0")
        self.dim = int(dim)
        self.rng = rng
        self.theta = float(theta)
        self.mu = np.broadcast_to(np.asarray(mu, dtype=np.float64), (self.dim,)).copy()
        self.sigma = float(sigma)
        self.dt = float(dt)
        self.state = self.mu.copy()

    def reset(self):
        self.state = self.mu.copy()

    def sample(self):
        """Advance one step and return the new noise vector."""
        eps = self.rng.standard_normal(self.dim)
        self.state = (self.state + self.theta * (self.mu - self.state) * self.dt
                      + self.sigma * np.sqrt(self.dt) * eps)
        return self.state.copy()

    def stationary_variance(self):
        r = 1.0 - self.theta * self.dt
        return self.sigma ** 2 * self.dt / (1.0 - r * r)
