//! Per-column cumulative sum from the bottom row upward.

use std::rc::Rc;

use super::{finish_op, upstream};
use crate::error::Result;
use crate::tensor::{Element, Tensor};

impl<E: Element> Tensor<E> {
    /// With 0-based row index `p`, `out[p][q] = sum_{i=p}^{H-1} in[i][q]` per
    /// batch, channel, and column. The backward rule is the transpose: a
    /// cumulative sum from the top.
    pub fn cumsum_from_bottom(&self) -> Result<Tensor<E>> {
        let (n, c, h, w) = self.dims4()?;
        let mut values = self.values().to_vec();
        for nc in 0..n * c {
            let base = nc * h * w;
            // bottom row stays; accumulate upward
            for i in (0..h.saturating_sub(1)).rev() {
                for j in 0..w {
                    let below = values[base + (i + 1) * w + j];
                    values[base + i * w + j] += below;
                }
            }
        }
        let x_in = Rc::clone(&self.inner);
        finish_op(
            "cumsum_from_bottom",
            &[self],
            self.shape().to_vec(),
            values,
            move |out| {
                Box::new(move || {
                    let Some(g) = upstream(&out) else { return };
                    let mut gx = g.clone();
                    drop(g);
                    for nc in 0..n * c {
                        let base = nc * h * w;
                        for i in 1..h {
                            for j in 0..w {
                                let above = gx[base + (i - 1) * w + j];
                                gx[base + i * w + j] += above;
                            }
                        }
                    }
                    x_in.accumulate(gx);
                })
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use crate::tensor::{Tape, Tensor};

    #[test]
    fn single_column() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let y = x.cumsum_from_bottom().unwrap();
        assert_eq!(y.values(), &[6.0, 5.0, 3.0]);
    }

    #[test]
    fn zeros_stay_zero() {
        let x = Tensor::<f64>::zeros(&[2, 2, 3, 2]);
        let y = x.cumsum_from_bottom().unwrap();
        assert!(y.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_row_identity() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 1, 3], vec![4.0, 5.0, 6.0]).unwrap();
        let y = x.cumsum_from_bottom().unwrap();
        assert_eq!(y.values(), x.values());
    }

    #[test]
    fn recurrence_row_relation() {
        // out[p] = in[p] + out[p+1]; bottom output row equals bottom input row
        let vals: Vec<f64> = (0..12).map(|i| (i as f64 * 1.7) % 5.0 - 2.0).collect();
        let x = Tensor::<f64>::from_vec(&[1, 1, 4, 3], vals.clone()).unwrap();
        let y = x.cumsum_from_bottom().unwrap();
        let o = y.values();
        for j in 0..3 {
            assert_eq!(o[3 * 3 + j], vals[3 * 3 + j]);
            for p in 0..3 {
                let lhs = o[p * 3 + j];
                let rhs = vals[p * 3 + j] + o[(p + 1) * 3 + j];
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_is_cumsum_from_top() {
        let tape = Tape::<f64>::new();
        let x = Tensor::leaf(&tape, &[1, 1, 3, 1], vec![1.0, 1.0, 1.0], true).unwrap();
        // weight rows so the gradient is distinguishable
        let wgt = Tensor::<f64>::from_vec(&[1, 1, 3, 1], vec![1.0, 10.0, 100.0]).unwrap();
        let loss = x.cumsum_from_bottom().unwrap().mul(&wgt).unwrap().sum_all().unwrap();
        tape.backward(&loss).unwrap();
        // d loss / d in[p] = sum_{i<=p} w[i]
        assert_eq!(x.grad().unwrap(), vec![1.0, 11.0, 111.0]);
    }
}
