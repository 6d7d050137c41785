use crate::error::{Error, Result};

/// Points of equal dimension stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "point cloud needs a positive dimension dividing {} coordinates",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("point cloud construction".into()));
        }
        Ok(PointCloud { dim, coords })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::invalid("points differ in dimension"));
        }
        Self::new(dim, points.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

/// Delay vectors `(x_i, x_{i+tau}, ..., x_{i+(dim-1)tau})` in index order.
pub fn takens_embed(x: &[f64], tau: usize, dim: usize) -> Result<PointCloud> {
    if tau == 0 || dim == 0 {
        return Err(Error::invalid("tau and dim must be at least 1"));
    }
    let span = (dim - 1) * tau;
    if x.len() <= span {
        return Err(Error::TooShort {
            needed: span + 1,
            got: x.len(),
        });
    }
    let n = x.len() - span;
    let mut coords = Vec::with_capacity(n * dim);
    for i in 0..n {
        coords.extend((0..dim).map(|k| x[i + k * tau]));
    }
    PointCloud::new(dim, coords)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_one_is_the_signal() {
        let x = [0.3, -0.1, 0.7];
        let c = takens_embed(&x, 3, 1).unwrap();
        assert_eq!(c.coords(), &x);
    }

    #[test]
    fn small_example() {
        let c = takens_embed(&[0.0, 1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        let pts: Vec<&[f64]> = c.points().collect();
        assert_eq!(pts, vec![&[0.0, 2.0][..], &[1.0, 3.0], &[2.0, 4.0]]);
    }

    #[test]
    fn insufficient_length() {
        assert!(matches!(
            takens_embed(&[1.0, 2.0, 3.0], 2, 2 + 1),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn count_check() {
        let x: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(takens_embed(&x, 7, 4).unwrap().len(), 979);
    }

    proptest::proptest! {
        #[test]
        fn point_count_formula(len in 1usize..300, tau in 1usize..20, dim in 1usize..8) {
            let x: Vec<f64> = (0..len).map(|i| i as f64).collect();
            match takens_embed(&x, tau, dim) {
                Ok(c) => {
                    proptest::prop_assert_eq!(c.len(), len - (dim - 1) * tau);
                    proptest::prop_assert_eq!(c.dim(), dim);
                }
                Err(_) => proptest::prop_assert!(len <= (dim - 1) * tau),
            }
        }
    }
}
