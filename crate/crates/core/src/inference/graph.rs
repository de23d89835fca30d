use crate::netgen::NetworkLayout;

/// One antenna of one AP, with the users it estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualAp {
    /// Global index `u * M + m`.
    pub index: usize,
    pub physical: usize,
    pub antenna: usize,
    /// `N_u`, ascending.
    pub users: Vec<usize>,
    /// Effective prior variance `rho0 g_{n,u}` of every entry of `users`.
    pub prior_var: Vec<f64>,
}

/// Position of a user inside a virtual AP's user list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub vap: usize,
    pub slot: usize,
}

/// Bipartite user/virtual-AP graph the engine runs on.
#[derive(Debug, Clone, PartialEq)]
pub struct CoopGraph {
    pub n_users: usize,
    pub antennas_per_ap: usize,
    pub n_vaps_total: usize,
    pub vaps: Vec<VirtualAp>,
    /// For each user, its links in ascending virtual-AP order.
    pub user_links: Vec<Vec<Link>>,
}

impl CoopGraph {
    /// Graph over all APs of the layout.
    pub fn new(layout: &NetworkLayout, antennas_per_ap: usize, tx_power: f64) -> Self {
        let all: Vec<usize> = (0..layout.n_aps()).collect();
        Self::for_aps(layout, antennas_per_ap, tx_power, &all)
    }

    /// Graph restricted to the virtual APs of the listed physical APs.
    pub fn for_aps(
        layout: &NetworkLayout,
        antennas_per_ap: usize,
        tx_power: f64,
        aps: &[usize],
    ) -> Self {
        let mut vaps = Vec::with_capacity(aps.len() * antennas_per_ap);
        let mut user_links = vec![Vec::new(); layout.n_users()];
        for &u in aps {
            let users = &layout.coop_ap_to_users[u];
            for m in 0..antennas_per_ap {
                let g = vaps.len();
                for (slot, &n) in users.iter().enumerate() {
                    user_links[n].push(Link { vap: g, slot });
                }
                vaps.push(VirtualAp {
                    index: u * antennas_per_ap + m,
                    physical: u,
                    antenna: m,
                    users: users.clone(),
                    prior_var: users.iter().map(|&n| tx_power * layout.g(n, u)).collect(),
                });
            }
        }
        CoopGraph {
            n_users: layout.n_users(),
            antennas_per_ap,
            n_vaps_total: layout.n_aps() * antennas_per_ap,
            vaps,
            user_links,
        }
    }

    /// Mean prior variance over all links; 1 when the graph has none.
    pub fn mean_prior_var(&self) -> f64 {
        let (sum, count) = self
            .vaps
            .iter()
            .flat_map(|v| v.prior_var.iter())
            .fold((0.0, 0usize), |(s, c), &g| (s + g, c + 1));
        if count == 0 || !(sum > 0.0) {
            1.0
        } else {
            sum / count as f64
        }
    }
}
