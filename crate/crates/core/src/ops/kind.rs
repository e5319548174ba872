/// Number of children an operation takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    Leaf,
    Unary,
    Binary,
    Varying,
}

/// Operation tag stored per tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[repr(u8)]
pub enum OpKind {
    #[default]
    Leaf,
    Relu,
    Tanh,
    Exp,
    NegLog,
    Sigmoid,
    Inv,
    Sqr,
    Cub,
    Log,
    Sqrt,
    InvSqrt,
    Add,
    Sub,
    Mul,
    /// Single child; the multiplier lives in the node's constant slot.
    MulByConst,
    Div,
    Mean,
    AddSquares,
    MeanSquares,
    NegativeMean,
    AddVarying,
    SubVarying,
    MulVarying,
    MeanVarying,
    SumOfSquaresVarying,
    MeanSquaresVarying,
    NegativeMeanVarying,
    /// Children are `[x_1..x_n, y_1..y_n]`.
    InnerProductNoBias,
    /// Children are `[x_1..x_n, y_1..y_n, b]`.
    InnerProductWithBias,
}

impl OpKind {
    pub const ALL: [OpKind; 30] = [
        OpKind::Leaf,
        OpKind::Relu,
        OpKind::Tanh,
        OpKind::Exp,
        OpKind::NegLog,
        OpKind::Sigmoid,
        OpKind::Inv,
        OpKind::Sqr,
        OpKind::Cub,
        OpKind::Log,
        OpKind::Sqrt,
        OpKind::InvSqrt,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::MulByConst,
        OpKind::Div,
        OpKind::Mean,
        OpKind::AddSquares,
        OpKind::MeanSquares,
        OpKind::NegativeMean,
        OpKind::AddVarying,
        OpKind::SubVarying,
        OpKind::MulVarying,
        OpKind::MeanVarying,
        OpKind::SumOfSquaresVarying,
        OpKind::MeanSquaresVarying,
        OpKind::NegativeMeanVarying,
        OpKind::InnerProductNoBias,
        OpKind::InnerProductWithBias,
    ];

    pub const UNARY: [OpKind; 11] = [
        OpKind::Relu,
        OpKind::Tanh,
        OpKind::Exp,
        OpKind::NegLog,
        OpKind::Sigmoid,
        OpKind::Inv,
        OpKind::Sqr,
        OpKind::Cub,
        OpKind::Log,
        OpKind::Sqrt,
        OpKind::InvSqrt,
    ];

    /// Binary ops taking two node operands (excludes `MulByConst`).
    pub const BINARY: [OpKind; 8] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Div,
        OpKind::Mean,
        OpKind::AddSquares,
        OpKind::MeanSquares,
        OpKind::NegativeMean,
    ];

    /// Reductions over a single sequence (excludes inner products).
    pub const REDUCTIONS: [OpKind; 7] = [
        OpKind::AddVarying,
        OpKind::SubVarying,
        OpKind::MulVarying,
        OpKind::MeanVarying,
        OpKind::SumOfSquaresVarying,
        OpKind::MeanSquaresVarying,
        OpKind::NegativeMeanVarying,
    ];

    /// Argument class as listed in the operator table. `MulByConst` counts as
    /// binary there even though only one operand is a node.
    pub const fn arity(self) -> Arity {
        use OpKind::*;
        match self {
            Leaf => Arity::Leaf,
            Relu | Tanh | Exp | NegLog | Sigmoid | Inv | Sqr | Cub | Log | Sqrt | InvSqrt => {
                Arity::Unary
            }
            Add | Sub | Mul | MulByConst | Div | Mean | AddSquares | MeanSquares
            | NegativeMean => Arity::Binary,
            AddVarying
            | SubVarying
            | MulVarying
            | MeanVarying
            | SumOfSquaresVarying
            | MeanSquaresVarying
            | NegativeMeanVarying
            | InnerProductNoBias
            | InnerProductWithBias => Arity::Varying,
        }
    }

    /// User-facing mnemonic.
    pub const fn mnemonic(self) -> &'static str {
        use OpKind::*;
        match self {
            Leaf => "leaf",
            Relu => "relu",
            Tanh => "tanh",
            Exp => "exp",
            NegLog => "negativeLog",
            Sigmoid => "sigmoid",
            Inv => "inv",
            Sqr => "sqr",
            Cub => "pow3",
            Log => "logarithm",
            Sqrt => "sqrt",
            InvSqrt => "invSqrt",
            Add => "add",
            Sub => "sub",
            Mul => "mul",
            MulByConst => "mulByConstant",
            Div => "div",
            Mean => "mean",
            AddSquares => "addSquares",
            MeanSquares => "meanSquares",
            NegativeMean => "negativeMean",
            AddVarying => "reduceSum",
            SubVarying => "reduceSub",
            MulVarying => "reduceMul",
            MeanVarying => "reduceMean",
            SumOfSquaresVarying => "reduceSumOfSquares",
            MeanSquaresVarying => "reduceMeanSquares",
            NegativeMeanVarying => "reduceNegativeMean",
            InnerProductNoBias => "innerProduct",
            InnerProductWithBias => "innerProductWithBias",
        }
    }

    /// Internal tag name (`eLeaf`, `eRelu`, ...).
    pub const fn internal_name(self) -> &'static str {
        use OpKind::*;
        match self {
            Leaf => "eLeaf",
            Relu => "eRelu",
            Tanh => "eTanh",
            Exp => "eExp",
            NegLog => "eNegLog",
            Sigmoid => "eSigmoid",
            Inv => "eInv",
            Sqr => "eSqr",
            Cub => "eCub",
            Log => "eLog",
            Sqrt => "eSqrt",
            InvSqrt => "eInvSqrt",
            Add => "eBinaryAdd",
            Sub => "eBinarySub",
            Mul => "eBinaryMult",
            MulByConst => "eBinaryMultByConst",
            Div => "eBinaryDiv",
            Mean => "eBinaryMean",
            AddSquares => "eBinaryAddSquares",
            MeanSquares => "eBinaryMeanSquares",
            NegativeMean => "eBinaryNegativeMean",
            AddVarying => "eAddVarying",
            SubVarying => "eSubVarying",
            MulVarying => "eMulVarying",
            MeanVarying => "eMeanVarying",
            SumOfSquaresVarying => "eSumOfSquaresVarying",
            MeanSquaresVarying => "eMeanSquaresVarying",
            NegativeMeanVarying => "eNegativeMeanVarying",
            InnerProductNoBias => "eInnerProductNoBias",
            InnerProductWithBias => "eInnerProductWithBias",
        }
    }
}

impl std::fmt::Display for OpKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.mnemonic())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arity_tables_are_consistent() {
        assert_eq!(OpKind::ALL.len(), 30);
        for k in OpKind::UNARY {
            assert_eq!(k.arity(), Arity::Unary);
        }
        for k in OpKind::BINARY {
            assert_eq!(k.arity(), Arity::Binary);
        }
        for k in OpKind::REDUCTIONS {
            assert_eq!(k.arity(), Arity::Varying);
        }
        assert_eq!(OpKind::MulByConst.arity(), Arity::Binary);
        assert_eq!(OpKind::Leaf.arity(), Arity::Leaf);
    }

    #[test]
    fn names_are_unique() {
        let mut names: Vec<_> = OpKind::ALL.iter().map(|k| k.internal_name()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), OpKind::ALL.len());
    }
}
