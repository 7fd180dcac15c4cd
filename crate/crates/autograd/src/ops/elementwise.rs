use crate::error::{ensure_same, Result};
use crate::{Float, Tensor, Var};

fn zip_map<S: Float>(a: &Tensor<S>, b: &Tensor<S>, f: impl Fn(S, S) -> S) -> Tensor<S> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

impl<S: Float> Var<S> {
    pub fn add(&self, other: &Var<S>) -> Result<Var<S>> {
        ensure_same("add", self.shape(), other.shape())?;
        let out = zip_map(&self.value, &other.value, |a, b| a + b);
        Ok(self.graph.record(out, &[self, other], |g, _| {
            vec![Some(g.clone()), Some(g.clone())]
        }))
    }

    pub fn sub(&self, other: &Var<S>) -> Result<Var<S>> {
        ensure_same("sub", self.shape(), other.shape())?;
        let out = zip_map(&self.value, &other.value, |a, b| a - b);
        Ok(self.graph.record(out, &[self, other], |g, needs| {
            vec![
                Some(g.clone()),
                needs[1].then(|| g.map(|v| -v)),
            ]
        }))
    }

    pub fn mul(&self, other: &Var<S>) -> Result<Var<S>> {
        ensure_same("mul", self.shape(), other.shape())?;
        let out = zip_map(&self.value, &other.value, |a, b| a * b);
        let (a, b) = (self.value_rc(), other.value_rc());
        Ok(self.graph.record(out, &[self, other], move |g, needs| {
            vec![
                needs[0].then(|| zip_map(g, &b, |g, b| g * b)),
                needs[1].then(|| zip_map(g, &a, |g, a| g * a)),
            ]
        }))
    }

    /// Sum of several equally shaped values, accumulated in argument order.
    pub fn sum_many(items: &[&Var<S>]) -> Result<Var<S>> {
        let first = items
            .first()
            .ok_or_else(|| crate::TensorError::Invalid {
                op: "sum_many",
                msg: "no operands".into(),
            })?;
        let mut acc = first.value().clone();
        for v in &items[1..] {
            ensure_same("sum_many", first.shape(), v.shape())?;
            acc.add_assign(v.value());
        }
        let n = items.len();
        Ok(first
            .graph
            .record(acc, items, move |g, _| vec![Some(g.clone()); n]))
    }

    pub fn scale(&self, c: f64) -> Var<S> {
        let c = S::of(c);
        let out = self.value.map(|v| v * c);
        self.graph
            .record(out, &[self], move |g, _| vec![Some(g.map(|v| v * c))])
    }

    pub fn add_scalar(&self, c: f64) -> Var<S> {
        let c = S::of(c);
        let out = self.value.map(|v| v + c);
        self.graph.record(out, &[self], |g, _| vec![Some(g.clone())])
    }

    /// `x[..., d] + b[d]`.
    pub fn add_bias(&self, bias: &Var<S>) -> Result<Var<S>> {
        let d = *self.shape().last().unwrap_or(&0);
        ensure_same("add_bias", &[d], bias.shape())?;
        let mut out = self.value().clone();
        let b = bias.value().data();
        for row in out.data_mut().chunks_mut(d.max(1)) {
            for (o, &bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        Ok(self.graph.record(out, &[self, bias], move |g, needs| {
            let gb = needs[1].then(|| {
                let mut acc = vec![S::zero(); d];
                for row in g.data().chunks(d.max(1)) {
                    for (a, &v) in acc.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                Tensor::new(vec![d], acc).expect("bias shape")
            });
            vec![Some(g.clone()), gb]
        }))
    }

    fn pointwise(&self, f: impl Fn(S) -> S, df: impl Fn(S) -> S + 'static) -> Var<S> {
        let out = self.value.map(f);
        let x = self.value_rc();
        self.graph.record(out, &[self], move |g, _| {
            vec![Some(zip_map(g, &x, |g, x| g * df(x)))]
        })
    }

    pub fn leaky_relu(&self, slope: f64) -> Var<S> {
        let s = S::of(slope);
        self.pointwise(
            move |x| if x >= S::zero() { x } else { x * s },
            move |x| if x >= S::zero() { S::one() } else { s },
        )
    }

    pub fn relu(&self) -> Var<S> {
        self.leaky_relu(0.0)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&self) -> Var<S> {
        let c = S::of((2.0 / std::f64::consts::PI).sqrt());
        let k = S::of(0.044715);
        let (half, two, three) = (S::of(0.5), S::of(2.0), S::of(3.0));
        let xs = self.value.data();
        let t: Vec<S> = xs
            .iter()
            .map(|&x| S::one() - two / ((two * c * (x + k * x * x * x)).fast_exp() + S::one()))
            .collect();
        let out: Vec<S> = xs.iter().zip(&t).map(|(&x, &t)| half * x * (S::one() + t)).collect();
        let out = Tensor::new(self.shape().to_vec(), out).expect("same shape");
        let x = self.value_rc();
        self.graph.record(out, &[self], move |g, _| {
            let d: Vec<S> = g
                .data()
                .iter()
                .zip(x.data())
                .zip(&t)
                .map(|((&g, &x), &t)| {
                    g * (half * (S::one() + t) + half * x * (S::one() - t * t) * c * (S::one() + three * k * x * x))
                })
                .collect();
            vec![Some(Tensor::new(x.shape().to_vec(), d).expect("same shape"))]
        })
    }

    pub fn sigmoid(&self) -> Var<S> {
        let out = self.value.map(sigmoid);
        let y = Tensor::clone(&out);
        self.graph.record(out, &[self], move |g, _| {
            vec![Some(zip_map(g, &y, |g, y| g * y * (S::one() - y)))]
        })
    }
}

pub(crate) fn sigmoid<S: Float>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).fast_exp())
    } else {
        let e = x.fast_exp();
        e / (S::one() + e)
    }
}
