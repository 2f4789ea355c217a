//! Closed-form parameter counts of the published architectures, written out
//! layer by layer without touching the library's builders.

/// (learnable, running statistics)
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Count {
    pub learnable: usize,
    pub stats: usize,
    pub convs: usize,
}

impl Count {
    pub fn conv(&mut self, cin: usize, cout: usize, k: usize, bias: bool) {
        self.learnable += k * k * cin * cout + if bias { cout } else { 0 };
        self.convs += 1;
    }

    pub fn bn(&mut self, c: usize) {
        self.learnable += 2 * c;
        self.stats += 2 * c;
    }

    pub fn total(&self) -> usize {
        self.learnable + self.stats
    }
}

pub fn vgg16() -> Count {
    let mut c = Count::default();
    let layers = [
        (3, 64),
        (64, 64),
        (64, 128),
        (128, 128),
        (128, 256),
        (256, 256),
        (256, 256),
        (256, 512),
        (512, 512),
        (512, 512),
        (512, 512),
        (512, 512),
        (512, 512),
    ];
    for (cin, cout) in layers {
        c.conv(cin, cout, 3, true);
    }
    c
}

/// Per-stage counts of a bottleneck ResNet (stage 0 = stem).
pub fn resnet_stages(blocks: [usize; 4]) -> [Count; 5] {
    let mut stages = [Count::default(); 5];
    stages[0].conv(3, 64, 7, true);
    stages[0].bn(64);
    let mut cin = 64;
    for (s, (&n, f)) in blocks.iter().zip([64, 128, 256, 512]).enumerate() {
        let st = &mut stages[s + 1];
        for j in 0..n {
            if j == 0 {
                st.conv(cin, 4 * f, 1, true);
                st.bn(4 * f);
            }
            st.conv(cin, f, 1, true);
            st.bn(f);
            st.conv(f, f, 3, true);
            st.bn(f);
            st.conv(f, 4 * f, 1, true);
            st.bn(4 * f);
            cin = 4 * f;
        }
    }
    stages
}

/// Per-stage counts of DenseNet-121 (stage 0 = stem; stage k = dense block k
/// with its transition, the last one with the final norm).
pub fn densenet121_stages() -> [Count; 5] {
    let mut stages = [Count::default(); 5];
    stages[0].conv(3, 64, 7, false);
    stages[0].bn(64);
    let mut ch = 64;
    for (s, n) in [6, 12, 24, 16].into_iter().enumerate() {
        let st = &mut stages[s + 1];
        for _ in 0..n {
            st.bn(ch);
            st.conv(ch, 128, 1, false);
            st.bn(128);
            st.conv(128, 32, 3, false);
            ch += 32;
        }
        if s < 3 {
            st.bn(ch);
            st.conv(ch, ch / 2, 1, false);
            ch /= 2;
        } else {
            st.bn(ch);
        }
    }
    stages
}

pub fn sum(stages: &[Count]) -> Count {
    stages.iter().fold(Count::default(), |a, b| Count {
        learnable: a.learnable + b.learnable,
        stats: a.stats + b.stats,
        convs: a.convs + b.convs,
    })
}

/// Learnable scalars of a dense head.
pub fn head(feature_dim: usize, hidden: &[usize], classes: usize) -> usize {
    let mut total = 0;
    let mut w = feature_dim;
    for &u in hidden {
        total += w * u + u;
        w = u;
    }
    total + w * classes + classes
}
