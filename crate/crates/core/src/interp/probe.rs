/// Hooks for counting the work an interpolator does.
///
/// The production paths are instantiated with [`NoProbe`], whose methods
/// compile to nothing.
pub trait OpProbe {
    /// One LUT vertex value read.
    fn fetch(&mut self) {}
    /// One weight-by-value multiplication.
    fn mul(&mut self) {}
    /// One data-dependent comparison that steers control flow.
    fn branch(&mut self) {}
}

#[derive(Clone, Copy, Debug, Default)]
pub struct NoProbe;

impl OpProbe for NoProbe {}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub fetches: u64,
    pub muls: u64,
    pub branches: u64,
}

impl OpProbe for OpCounts {
    #[inline]
    fn fetch(&mut self) {
        self.fetches += 1;
    }

    #[inline]
    fn mul(&mut self) {
        self.muls += 1;
    }

    #[inline]
    fn branch(&mut self) {
        self.branches += 1;
    }
}
