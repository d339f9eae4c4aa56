const int MI = 9;
const int MJ = 9;
const int MK = 9;
const int NN = 3;

float p[MI][MJ][MK];
float a0[MI][MJ][MK];
float a1[MI][MJ][MK];
float a2[MI][MJ][MK];
float a3[MI][MJ][MK];
float b0[MI][MJ][MK];
float b1[MI][MJ][MK];
float b2[MI][MJ][MK];
float c0[MI][MJ][MK];
float c1[MI][MJ][MK];
float c2[MI][MJ][MK];
float bnd[MI][MJ][MK];
float wrk1[MI][MJ][MK];
float wrk2[MI][MJ][MK];
float res[MI][MJ][MK];
float omega = 0.8f;
float gosa;

void initmt() {
    for (int i = 0; i < MI; i++) {
        for (int j = 0; j < MJ; j++) {
            for (int k = 0; k < MK; k++) {
                a0[i][j][k] = 1.0f;
                a1[i][j][k] = 1.0f;
                a2[i][j][k] = 1.0f;
                a3[i][j][k] = 1.0f / 6.0f;
                b0[i][j][k] = 0.0f;
                b1[i][j][k] = 0.0f;
                b2[i][j][k] = 0.0f;
                c0[i][j][k] = 1.0f;
                c1[i][j][k] = 1.0f;
                c2[i][j][k] = 1.0f;
                p[i][j][k] = (float)(i * i) / (float)((MI - 1) * (MI - 1));
                wrk1[i][j][k] = 0.0f;
                wrk2[i][j][k] = 0.0f;
                res[i][j][k] = 0.0f;
            }
        }
    }
}

void boundary() {
    for (int j = 0; j < MJ; j++) {
        for (int k = 0; k < MK; k++) {
            bnd[0][j][k] = 0.0f;
            bnd[MI - 1][j][k] = 0.0f;
        }
    }
}

float jacobi(int nn) {
    float g = 0.0f;
    for (int n = 0; n < nn; n++) {
        for (int i = 1; i < MI - 1; i++) {
            for (int j = 1; j < MJ - 1; j++) {
                for (int k = 1; k < MK - 1; k++) {
                    float s0 = a0[i][j][k] * p[i + 1][j][k] + a1[i][j][k] * p[i][j + 1][k] + a2[i][j][k] * p[i][j][k + 1]
                        + b0[i][j][k] * (p[i + 1][j + 1][k] - p[i + 1][j - 1][k] - p[i - 1][j + 1][k] + p[i - 1][j - 1][k])
                        + b1[i][j][k] * (p[i][j + 1][k + 1] - p[i][j - 1][k + 1] - p[i][j + 1][k - 1] + p[i][j - 1][k - 1])
                        + b2[i][j][k] * (p[i + 1][j][k + 1] - p[i - 1][j][k + 1] - p[i + 1][j][k - 1] + p[i - 1][j][k - 1])
                        + c0[i][j][k] * p[i - 1][j][k] + c1[i][j][k] * p[i][j - 1][k] + c2[i][j][k] * p[i][j][k - 1]
                        + wrk1[i][j][k];
                    float ss = (s0 * a3[i][j][k] - p[i][j][k]) * bnd[i][j][k];
                    res[i][j][k] = ss * ss;
                    wrk2[i][j][k] = p[i][j][k] + omega * ss;
                }
            }
        }
        g = 0.0f;
        for (int i = 1; i < MI - 1; i++) {
            for (int j = 1; j < MJ - 1; j++) {
                for (int k = 1; k < MK - 1; k++) {
                    g = g + res[i][j][k];
                }
            }
        }
        for (int i = 1; i < MI - 1; i++) {
            for (int j = 1; j < MJ - 1; j++) {
                for (int k = 1; k < MK - 1; k++) {
                    p[i][j][k] = wrk2[i][j][k];
                }
            }
        }
    }
    return g;
}

int main() {
    initmt();
    boundary();
    for (int i = 0; i < MI; i++) {
        for (int j = 0; j < MJ; j++) {
            bnd[i][j][MK / 2] = bnd[i][j][MK / 2] * 0.5f + 0.5f;
        }
    }
    gosa = jacobi(NN);
    print(gosa, p[4][4][4]);
    return 0;
}
